//! WAV decode/encode, channel handling, and deterministic test signals.
//!
//! Samples are held as f64 in [-1, 1] regardless of file bit depth; spectral
//! correlation estimation multiplies spectra together and needs the dynamic
//! range.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// PCM audio: one or more equal-length channels plus a sample rate.
///
/// Immutable after construction; all operations return new buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
    pub source_label: String,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32, label: impl Into<String>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Shape("audio buffer needs at least one channel".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("channels have differing lengths".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        Ok(AudioBuffer {
            channels,
            sample_rate,
            source_label: label.into(),
        })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }
}

/// Check the RIFF/WAVE magic up front so malformed files name the offending
/// chunk instead of surfacing as a generic parse failure.
fn check_riff_magic(path: &Path) -> Result<()> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 12];
    f.read_exact(&mut head)
        .map_err(|_| Error::WavDecode {
            path: path.into(),
            detail: "file shorter than the RIFF header".into(),
        })?;
    if &head[0..4] != b"RIFF" {
        return Err(Error::WavDecode {
            path: path.into(),
            detail: "missing RIFF chunk id".into(),
        });
    }
    if &head[8..12] != b"WAVE" {
        return Err(Error::WavDecode {
            path: path.into(),
            detail: "missing WAVE form type in RIFF chunk".into(),
        });
    }
    Ok(())
}

fn decode_wav<R: Read>(reader: R, path: &Path, label: &str) -> Result<AudioBuffer> {
    let mut wav = hound::WavReader::new(reader).map_err(|e| Error::WavDecode {
        path: path.into(),
        detail: e.to_string(),
    })?;
    let spec = wav.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            detail: format!("{} channels (supported: 1-2)", spec.channels),
        });
    }
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24)) => {
            let full_scale = (1i64 << (bits - 1)) as f64;
            let mut out = Vec::with_capacity(wav.len() as usize);
            for s in wav.samples::<i32>() {
                let v = s.map_err(|e| Error::WavDecode {
                    path: path.into(),
                    detail: format!("data chunk: {e}"),
                })?;
                out.push(v as f64 / full_scale);
            }
            out
        }
        (hound::SampleFormat::Float, 32) => {
            let mut out = Vec::with_capacity(wav.len() as usize);
            for s in wav.samples::<f32>() {
                let v = s.map_err(|e| Error::WavDecode {
                    path: path.into(),
                    detail: format!("data chunk: {e}"),
                })? as f64;
                if !v.is_finite() {
                    return Err(Error::NonFinite("wav float sample".into()));
                }
                out.push(v.clamp(-1.0, 1.0));
            }
            out
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                detail: format!("{fmt:?} {bits}-bit (supported: int 8/16/24, float 32)"),
            });
        }
    };
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for (i, v) in interleaved.into_iter().enumerate() {
        channels[i % n_ch].push(v);
    }
    AudioBuffer::new(channels, spec.sample_rate, label)
}

/// Decode a PCM WAV file (integer 8/16/24-bit or IEEE float 32-bit, 1-2
/// channels). Integer samples are divided by the full-scale magnitude of
/// their bit depth so output lies in [-1, 1].
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    check_riff_magic(path)?;
    let reader = File::open(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_wav(BufReader::new(reader), path, &label)
}

/// Decode a WAV already held in memory (uploads, embedded fixtures).
pub fn load_wav_bytes(bytes: &[u8], label: &str) -> Result<AudioBuffer> {
    let pseudo_path = Path::new(label);
    if bytes.len() < 12 {
        return Err(Error::WavDecode {
            path: pseudo_path.into(),
            detail: "buffer shorter than the RIFF header".into(),
        });
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::WavDecode {
            path: pseudo_path.into(),
            detail: "missing RIFF chunk id".into(),
        });
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::WavDecode {
            path: pseudo_path.into(),
            detail: "missing WAVE form type in RIFF chunk".into(),
        });
    }
    decode_wav(std::io::Cursor::new(bytes), pseudo_path, label)
}

/// Statistics reported back from [`save_wav`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SaveStats {
    /// Samples that fell outside [-1, 1] and were hard-clipped.
    pub clipped: usize,
}

/// Encode a buffer as 16-bit PCM WAV. Out-of-range samples are hard-clipped
/// and counted.
pub fn save_wav(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<SaveStats> {
    let path = path.as_ref();
    for ch in buffer.channels() {
        if ch.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample written to wav".into()));
        }
    }
    let spec = hound::WavSpec {
        channels: buffer.n_channels() as u16,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = hound::WavWriter::new(BufWriter::new(file), spec)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let mut stats = SaveStats::default();
    for frame in 0..buffer.len() {
        for ch in buffer.channels() {
            let v = ch[frame];
            let clamped = v.clamp(-1.0, 1.0);
            if clamped != v {
                stats.clipped += 1;
            }
            let q = (clamped * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer
                .write_sample(q)
                .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
        }
    }
    writer
        .finalize()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    Ok(stats)
}

/// Average channels down to one. Mono input is returned unchanged.
pub fn to_mono(buffer: &AudioBuffer) -> AudioBuffer {
    if buffer.n_channels() == 1 {
        return buffer.clone();
    }
    let n = buffer.len();
    let scale = 1.0 / buffer.n_channels() as f64;
    let mono: Vec<f64> = (0..n)
        .map(|i| buffer.channels().iter().map(|c| c[i]).sum::<f64>() * scale)
        .collect();
    AudioBuffer::new(vec![mono], buffer.sample_rate(), buffer.source_label.clone())
        .expect("mono buffer is well-formed")
}

/// RMS level of generated test noise, relative to full scale.
pub const NOISE_RMS: f64 = 0.1;

/// Deterministic Gaussian white noise at RMS 0.1 full scale, mono.
pub fn gen_white_noise(duration_s: f64, sample_rate: u32, seed: u64) -> Result<AudioBuffer> {
    if duration_s <= 0.0 {
        return Err(Error::Config("duration_s must be positive".into()));
    }
    let n = (duration_s * sample_rate as f64).round() as usize;
    let mut rng = Rng::substream(seed, 0x57484954); // "WHIT"
    let samples: Vec<f64> = (0..n).map(|_| NOISE_RMS * rng.normal()).collect();
    AudioBuffer::new(vec![samples], sample_rate, format!("white-noise-{seed}"))
}

/// White noise amplitude-modulated at cyclic frequency `alpha0_hz`:
/// x(n) = 0.5 (1 + cos(2 pi alpha0 n / fs)) w(n). The modulation plants
/// spectral correlation at alpha0 (and 2 alpha0) across all of f.
pub fn gen_am_noise(duration_s: f64, sample_rate: u32, alpha0_hz: f64, seed: u64) -> Result<AudioBuffer> {
    if duration_s <= 0.0 {
        return Err(Error::Config("duration_s must be positive".into()));
    }
    let n = (duration_s * sample_rate as f64).round() as usize;
    let mut rng = Rng::substream(seed, 0x414d4e4f); // "AMNO"
    let w = std::f64::consts::TAU * alpha0_hz / sample_rate as f64;
    let samples: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 + (w * i as f64).cos()) * NOISE_RMS * rng.normal())
        .collect();
    AudioBuffer::new(
        vec![samples],
        sample_rate,
        format!("am-noise-{alpha0_hz}hz-{seed}"),
    )
}

/// Pure tone at `freq_hz` with the given peak amplitude, mono.
pub fn gen_tone(duration_s: f64, sample_rate: u32, freq_hz: f64, amplitude: f64) -> Result<AudioBuffer> {
    if duration_s <= 0.0 {
        return Err(Error::Config("duration_s must be positive".into()));
    }
    let n = (duration_s * sample_rate as f64).round() as usize;
    let w = std::f64::consts::TAU * freq_hz / sample_rate as f64;
    let samples: Vec<f64> = (0..n).map(|i| amplitude * (w * i as f64).sin()).collect();
    AudioBuffer::new(vec![samples], sample_rate, format!("tone-{freq_hz}hz"))
}

/// Scale every sample by `c` (used by the scale-invariance checks).
pub fn scale(buffer: &AudioBuffer, c: f64) -> AudioBuffer {
    let channels = buffer
        .channels()
        .iter()
        .map(|ch| ch.iter().map(|v| v * c).collect())
        .collect();
    AudioBuffer::new(channels, buffer.sample_rate(), buffer.source_label.clone())
        .expect("scaled buffer is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_division_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 22_050,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for s in [0i16, 16_384, -32_768] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();

        let buf = load_wav(&path).unwrap();
        assert_eq!(buf.channel(0), &[0.0, 0.5, -1.0]);
    }

    #[test]
    fn stereo_preserves_channels_and_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let l: Vec<f64> = (0..100).map(|i| (i as f64 / 100.0) - 0.5).collect();
        let r: Vec<f64> = (0..100).map(|i| 0.25 - (i as f64 / 400.0)).collect();
        let buf = AudioBuffer::new(vec![l, r], 22_050, "s").unwrap();
        save_wav(&buf, &path).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.n_channels(), 2);
        assert_eq!(back.len(), 100);
        assert_eq!(back.sample_rate(), 22_050);
    }

    #[test]
    fn round_trip_within_one_lsb() {
        let mut rng = Rng::new(11);
        for trial in 0..5 {
            let n = 200 + trial * 37;
            let ch: Vec<f64> = (0..n).map(|_| rng.range_f64(-1.0, 1.0)).collect();
            let buf = AudioBuffer::new(vec![ch], 8_000, "rt").unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.wav");
            save_wav(&buf, &path).unwrap();
            let back = load_wav(&path).unwrap();
            assert_eq!(back.len(), buf.len());
            for (a, b) in buf.channel(0).iter().zip(back.channel(0)) {
                assert!((a - b).abs() <= 1.0 / 32768.0 + 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn save_reports_clipped_samples() {
        let buf = AudioBuffer::new(vec![vec![0.0, 1.5, -2.0, 0.5]], 8_000, "c").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stats = save_wav(&buf, dir.path().join("c.wav")).unwrap();
        assert_eq!(stats.clipped, 2);
    }

    #[test]
    fn malformed_header_names_chunk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"JUNKxxxxWAVEetc garbage").unwrap();
        let err = load_wav(&path).unwrap_err();
        assert!(err.to_string().contains("RIFF"), "{err}");
    }

    #[test]
    fn to_mono_averages_and_is_idempotent() {
        let buf = AudioBuffer::new(vec![vec![1.0, 0.2], vec![0.0, 0.4]], 8_000, "m").unwrap();
        let mono = to_mono(&buf);
        assert_eq!(mono.channel(0), &[0.5, 0.30000000000000004]);
        let again = to_mono(&mono);
        assert_eq!(again.channel(0), mono.channel(0));

        // random stereo: output == (L+R)/2 exactly
        let mut rng = Rng::new(5);
        let l: Vec<f64> = (0..500).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let r: Vec<f64> = (0..500).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let st = AudioBuffer::new(vec![l.clone(), r.clone()], 8_000, "x").unwrap();
        let m = to_mono(&st);
        for i in 0..500 {
            assert_eq!(m.channel(0)[i], (l[i] + r[i]) / 2.0);
        }
    }

    #[test]
    fn white_noise_is_deterministic_and_sized() {
        let a = gen_white_noise(10.0, 22_050, 7).unwrap();
        let b = gen_white_noise(10.0, 22_050, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 220_500);
        assert_eq!(a.n_channels(), 1);
    }

    #[test]
    fn white_noise_mean_near_zero() {
        let buf = gen_white_noise(10.0, 22_050, 3).unwrap();
        let n = buf.len() as f64;
        let mean = buf.channel(0).iter().sum::<f64>() / n;
        // samples are N(0, 0.1^2); 4 sigma / sqrt(N) bound
        assert!(mean.abs() < 4.0 * NOISE_RMS / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn white_noise_lag1_autocorrelation_small() {
        let buf = gen_white_noise(10.0, 22_050, 21).unwrap();
        let x = buf.channel(0);
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        let lag1: f64 = (1..n).map(|i| (x[i] - mean) * (x[i - 1] - mean)).sum::<f64>();
        let rho = lag1 / var;
        assert!(rho.abs() < 0.02, "lag-1 autocorrelation {rho}");
    }

    #[test]
    fn empty_and_mismatched_channels_rejected() {
        assert!(AudioBuffer::new(vec![], 8_000, "e").is_err());
        assert!(AudioBuffer::new(vec![vec![0.0], vec![0.0, 1.0]], 8_000, "e").is_err());
    }
}
