//! STFT/spectrogram computation and the tile normalization chain:
//! log-normalize, rescale to [-1, 1], row-downsample, bootstrap into
//! 64x64x3 tiles, and the inverse chain back to power spectrograms.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio_io::AudioBuffer;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tile geometry: 192 frequency rows split into three 64-row channels over
/// 64 time frames.
pub const TILE_ROWS: usize = 192;
pub const TILE_SIZE: usize = 64;
pub const TILE_CHANNELS: usize = 3;
pub const TILE_LEN: usize = TILE_CHANNELS * TILE_SIZE * TILE_SIZE;

/// Relative power floor used when no explicit epsilon is given: keeps detail
/// at the low end of the power density without producing -inf logs.
pub const DEFAULT_EPSILON_REL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowType {
    /// Hann window, the standard reading of "raised cosine" for STFT.
    RaisedCosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window_type: WindowType,
    pub fft_len: usize,
}

impl StftConfig {
    pub fn new(window_len: usize, hop: usize, fft_len: usize) -> Result<Self> {
        let cfg = StftConfig {
            window_len,
            hop,
            window_type: WindowType::RaisedCosine,
            fft_len,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::Config("window_len must be >= 2".into()));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Config("need 0 < hop <= window_len".into()));
        }
        if self.fft_len < self.window_len {
            return Err(Error::Config("fft_len must be >= window_len".into()));
        }
        Ok(())
    }

    /// 2048-point window, 50% overlap: the spectrogram-figure configuration.
    pub fn analysis_default() -> Self {
        StftConfig {
            window_len: 2048,
            hop: 1024,
            window_type: WindowType::RaisedCosine,
            fft_len: 2048,
        }
    }

    /// 2048-point window with hop 512 so a 32 400-sample segment maps to a
    /// 1025x64 tile spectrogram.
    pub fn tile_default() -> Self {
        StftConfig {
            window_len: 2048,
            hop: 512,
            window_type: WindowType::RaisedCosine,
            fft_len: 2048,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Number of frames the sliding window yields on `len` samples
    /// (trailing partial frame zero-padded).
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len).div_ceil(self.hop) + 1
        }
    }

    /// Periodic Hann window of length `window_len`.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        (0..self.window_len)
            .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n).cos()))
            .collect()
    }

    /// Sum of squared window samples (the periodogram energy normalizer).
    pub fn window_energy(&self) -> f64 {
        self.window().iter().map(|w| w * w).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    Power,
    LogNormalized,
}

/// Real-valued time-frequency matrix, rows = frequency bins, columns = frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<f64>,
    n_bins: usize,
    n_frames: usize,
    pub bin_hz: f64,
    pub frame_hop_s: f64,
    pub kind: SpecKind,
}

impl Spectrogram {
    pub fn new(
        data: Vec<f64>,
        n_bins: usize,
        n_frames: usize,
        bin_hz: f64,
        frame_hop_s: f64,
        kind: SpecKind,
    ) -> Result<Self> {
        if data.len() != n_bins * n_frames {
            return Err(Error::Shape(format!(
                "spectrogram data length {} != {n_bins} x {n_frames}",
                data.len()
            )));
        }
        Ok(Spectrogram {
            data,
            n_bins,
            n_frames,
            bin_hz,
            frame_hop_s,
            kind,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    #[inline]
    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.data[bin * self.n_frames + frame]
    }

    #[inline]
    pub fn at_mut(&mut self, bin: usize, frame: usize) -> &mut f64 {
        &mut self.data[bin * self.n_frames + frame]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, bin: usize) -> &[f64] {
        &self.data[bin * self.n_frames..(bin + 1) * self.n_frames]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Complex STFT output, rows = one-sided frequency bins, columns = frames.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    data: Vec<Complex64>,
    n_bins: usize,
    n_frames: usize,
    pub bin_hz: f64,
    pub frame_hop_s: f64,
}

impl ComplexSpectrogram {
    pub fn from_parts(
        data: Vec<Complex64>,
        n_bins: usize,
        n_frames: usize,
        bin_hz: f64,
        frame_hop_s: f64,
    ) -> Result<Self> {
        if data.len() != n_bins * n_frames {
            return Err(Error::Shape(format!(
                "complex spectrogram data length {} != {n_bins} x {n_frames}",
                data.len()
            )));
        }
        Ok(ComplexSpectrogram {
            data,
            n_bins,
            n_frames,
            bin_hz,
            frame_hop_s,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    #[inline]
    pub fn at(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[bin * self.n_frames + frame]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}

/// Rescaling record from [`log_normalize`]: enough to invert exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationMeta {
    pub log_epsilon: f64,
    pub min_log: f64,
    pub max_log: f64,
}

impl NormalizationMeta {
    /// Degenerate input (constant power) is flagged by min_log == max_log.
    pub fn is_degenerate(&self) -> bool {
        self.max_log <= self.min_log
    }
}

/// One GAN training sample: three 64x64 channels stacked low-to-high
/// frequency, entries in [-1, 1], plus the rows it was sampled from and the
/// normalization needed to map it back to power.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    /// Channel-major [3][64][64], C row-major order.
    pub data: Vec<f32>,
    /// 192 strictly increasing source-row indices, one per frequency band.
    pub row_map: Vec<usize>,
    pub meta: NormalizationMeta,
}

impl Tile {
    #[inline]
    pub fn at(&self, ch: usize, row: usize, col: usize) -> f32 {
        self.data[(ch * TILE_SIZE + row) * TILE_SIZE + col]
    }
}

/// Raw per-frame two-sided spectra (length `fft_len` each), the shared
/// kernel behind [`stft`] and the cyclic-spectrum estimator.
pub(crate) fn stft_frames_two_sided(
    samples: &[f64],
    cfg: &StftConfig,
) -> Result<Vec<Vec<Complex64>>> {
    cfg.validate()?;
    if samples.len() < cfg.window_len {
        return Err(Error::TooShort {
            len: samples.len(),
            min: cfg.window_len,
        });
    }
    let n_frames = cfg.n_frames(samples.len());
    let window = cfg.window();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.fft_len);
    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_len];
    for t in 0..n_frames {
        let start = t * cfg.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let x = if i < cfg.window_len && start + i < samples.len() {
                samples[start + i] * window[i]
            } else {
                0.0
            };
            *slot = Complex64::new(x, 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf.clone());
    }
    Ok(frames)
}

/// Short-time Fourier transform of a mono buffer. Frame t, bin k holds
/// sum_n w(n) x(t hop + n) exp(-j 2 pi n k / fft_len), one-sided bins
/// 0..=fft_len/2; the trailing partial frame is zero-padded.
pub fn stft(buffer: &AudioBuffer, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if buffer.n_channels() != 1 {
        return Err(Error::Shape(format!(
            "stft expects a mono buffer, got {} channels",
            buffer.n_channels()
        )));
    }
    let frames = stft_frames_two_sided(buffer.channel(0), cfg)?;
    let n_frames = frames.len();
    let n_bins = cfg.n_bins();
    let fs = buffer.sample_rate() as f64;
    let mut data = vec![Complex64::new(0.0, 0.0); n_bins * n_frames];
    for (t, frame) in frames.iter().enumerate() {
        for k in 0..n_bins {
            data[k * n_frames + t] = frame[k];
        }
    }
    Ok(ComplexSpectrogram {
        data,
        n_bins,
        n_frames,
        bin_hz: fs / cfg.fft_len as f64,
        frame_hop_s: cfg.hop as f64 / fs,
    })
}

/// STFT with the frame count pinned to `n_frames`, zero-padding the signal
/// as required (used by the tile pipeline, where the 1025x64 shape is the
/// binding constraint regardless of segment length).
pub fn stft_fixed_frames(
    buffer: &AudioBuffer,
    cfg: &StftConfig,
    n_frames: usize,
) -> Result<ComplexSpectrogram> {
    let needed = cfg.window_len + (n_frames - 1) * cfg.hop;
    if buffer.channel(0).len() >= needed {
        let spec = stft(buffer, cfg)?;
        if spec.n_frames() == n_frames {
            return Ok(spec);
        }
        // keep the first n_frames columns
        let n_bins = spec.n_bins();
        let mut data = vec![Complex64::new(0.0, 0.0); n_bins * n_frames];
        for k in 0..n_bins {
            for t in 0..n_frames {
                data[k * n_frames + t] = spec.at(k, t);
            }
        }
        return Ok(ComplexSpectrogram {
            data,
            n_bins,
            n_frames,
            bin_hz: spec.bin_hz,
            frame_hop_s: spec.frame_hop_s,
        });
    }
    let mut padded = buffer.channel(0).to_vec();
    padded.resize(needed, 0.0);
    let buf = AudioBuffer::new(vec![padded], buffer.sample_rate(), buffer.source_label.clone())?;
    stft(&buf, cfg)
}

/// Inverse STFT by weighted overlap-add with window-square normalization.
/// `frames` are one-sided spectra laid out like [`ComplexSpectrogram`].
pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig, sample_rate: u32) -> Result<AudioBuffer> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    if spec.n_bins() != n_bins {
        return Err(Error::Shape(format!(
            "istft: {} bins but config implies {n_bins}",
            spec.n_bins()
        )));
    }
    let n_frames = spec.n_frames();
    let out_len = cfg.window_len + (n_frames.saturating_sub(1)) * cfg.hop;
    let window = cfg.window();
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(cfg.fft_len);
    let mut num = vec![0.0f64; out_len];
    let mut den = vec![0.0f64; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_len];
    let scale = 1.0 / cfg.fft_len as f64;
    for t in 0..n_frames {
        // Hermitian extension of the one-sided spectrum
        for k in 0..n_bins {
            buf[k] = spec.at(k, t);
        }
        for k in n_bins..cfg.fft_len {
            buf[k] = spec.at(cfg.fft_len - k, t).conj();
        }
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for (i, &w) in window.iter().enumerate() {
            num[start + i] += buf[i].re * scale * w;
            den[start + i] += w * w;
        }
    }
    let floor = 1e-10;
    let samples: Vec<f64> = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| if d > floor { n / d } else { 0.0 })
        .collect();
    AudioBuffer::new(vec![samples], sample_rate, "istft")
}

/// Entry-wise squared magnitude.
pub fn power(spec: &ComplexSpectrogram) -> Spectrogram {
    let data = spec.data().iter().map(|c| c.norm_sqr()).collect();
    Spectrogram {
        data,
        n_bins: spec.n_bins(),
        n_frames: spec.n_frames(),
        bin_hz: spec.bin_hz,
        frame_hop_s: spec.frame_hop_s,
        kind: SpecKind::Power,
    }
}

/// Default epsilon for a power spectrogram: `DEFAULT_EPSILON_REL` of its max
/// (falling back to an absolute floor when the input is all-zero).
pub fn default_epsilon(spec: &Spectrogram) -> f64 {
    let max = spec.max_value();
    if max > 0.0 {
        DEFAULT_EPSILON_REL * max
    } else {
        f64::MIN_POSITIVE
    }
}

/// L = log(P + epsilon) linearly rescaled to [-1, 1]. A constant input maps
/// to all zeros with the degenerate case flagged in the meta.
pub fn log_normalize(spec: &Spectrogram, epsilon: f64) -> Result<(Spectrogram, NormalizationMeta)> {
    if spec.kind != SpecKind::Power {
        return Err(Error::Shape("log_normalize expects a power spectrogram".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    let logs: Vec<f64> = spec.data.iter().map(|&p| (p + epsilon).ln()).collect();
    let mut min_log = f64::INFINITY;
    let mut max_log = f64::NEG_INFINITY;
    for &l in &logs {
        min_log = min_log.min(l);
        max_log = max_log.max(l);
    }
    let meta = NormalizationMeta {
        log_epsilon: epsilon,
        min_log,
        max_log,
    };
    let span = max_log - min_log;
    let data = if span > 0.0 {
        logs.iter().map(|&l| 2.0 * (l - min_log) / span - 1.0).collect()
    } else {
        vec![0.0; logs.len()]
    };
    Ok((
        Spectrogram {
            data,
            n_bins: spec.n_bins,
            n_frames: spec.n_frames,
            bin_hz: spec.bin_hz,
            frame_hop_s: spec.frame_hop_s,
            kind: SpecKind::LogNormalized,
        },
        meta,
    ))
}

/// Exact algebraic inverse of [`log_normalize`], floored at zero.
pub fn invert_normalization(spec: &Spectrogram, meta: &NormalizationMeta) -> Result<Spectrogram> {
    if spec.kind != SpecKind::LogNormalized {
        return Err(Error::Shape(
            "invert_normalization expects a log-normalized spectrogram".into(),
        ));
    }
    let span = meta.max_log - meta.min_log;
    let data = spec
        .data
        .iter()
        .map(|&v| {
            let l = if span > 0.0 {
                (v + 1.0) * 0.5 * span + meta.min_log
            } else {
                meta.min_log
            };
            (l.exp() - meta.log_epsilon).max(0.0)
        })
        .collect();
    Ok(Spectrogram {
        data,
        n_bins: spec.n_bins,
        n_frames: spec.n_frames,
        bin_hz: spec.bin_hz,
        frame_hop_s: spec.frame_hop_s,
        kind: SpecKind::Power,
    })
}

/// Partition `n_rows` into `n_bands` contiguous bands as equal as possible.
/// Returns half-open (start, end) ranges covering every row exactly once.
pub fn band_partition(n_rows: usize, n_bands: usize) -> Vec<(usize, usize)> {
    (0..n_bands)
        .map(|i| (i * n_rows / n_bands, (i + 1) * n_rows / n_bands))
        .collect()
}

/// Row centers of [`band_partition`] on the source-row index axis.
pub fn band_centers(n_rows: usize, n_bands: usize) -> Vec<f64> {
    band_partition(n_rows, n_bands)
        .iter()
        .map(|&(s, e)| (s + e - 1) as f64 * 0.5)
        .collect()
}

/// Deterministic row downsampling: rows are partitioned into `out_rows`
/// contiguous bands and each output row is its band mean.
pub fn downsample_rows(spec: &Spectrogram, out_rows: usize) -> Result<Spectrogram> {
    if spec.n_bins < out_rows {
        return Err(Error::Shape(format!(
            "cannot downsample {} rows to {out_rows}",
            spec.n_bins
        )));
    }
    if spec.n_bins == out_rows {
        return Ok(spec.clone());
    }
    let bands = band_partition(spec.n_bins, out_rows);
    let mut data = Vec::with_capacity(out_rows * spec.n_frames);
    for &(s, e) in &bands {
        let inv = 1.0 / (e - s) as f64;
        for t in 0..spec.n_frames {
            let mut acc = 0.0;
            for r in s..e {
                acc += spec.at(r, t);
            }
            data.push(acc * inv);
        }
    }
    Ok(Spectrogram {
        data,
        n_bins: out_rows,
        n_frames: spec.n_frames,
        bin_hz: spec.bin_hz * spec.n_bins as f64 / out_rows as f64,
        frame_hop_s: spec.frame_hop_s,
        kind: spec.kind,
    })
}

/// Stratified bootstrap tiling of a power spectrogram with exactly
/// [`TILE_SIZE`] frames: for each tile, one random row is sampled from each
/// of 192 contiguous frequency bands (deterministic per seed and tile
/// index), the rows are stacked into three 64-row channels ordered low to
/// high frequency, and values pass through [`log_normalize`].
pub fn bootstrap_tiles(spec: &Spectrogram, n_tiles: usize, seed: u64) -> Result<Vec<Tile>> {
    if spec.kind != SpecKind::Power {
        return Err(Error::Shape("bootstrap_tiles expects a power spectrogram".into()));
    }
    if spec.n_frames != TILE_SIZE {
        return Err(Error::Shape(format!(
            "bootstrap_tiles expects exactly {TILE_SIZE} frames, got {}",
            spec.n_frames
        )));
    }
    if spec.n_bins < TILE_ROWS {
        return Err(Error::Shape(format!(
            "bootstrap_tiles needs >= {TILE_ROWS} rows, got {}",
            spec.n_bins
        )));
    }
    let (normalized, meta) = log_normalize(spec, default_epsilon(spec))?;
    let bands = band_partition(spec.n_bins, TILE_ROWS);
    let mut tiles = Vec::with_capacity(n_tiles);
    for tile_idx in 0..n_tiles {
        let mut rng = Rng::substream(seed, 0x54494c45 ^ (tile_idx as u64).wrapping_mul(0x9E37)); // "TILE"
        let mut row_map = Vec::with_capacity(TILE_ROWS);
        let mut data = vec![0.0f32; TILE_LEN];
        for (band_idx, &(s, e)) in bands.iter().enumerate() {
            let row = s + rng.below(e - s);
            row_map.push(row);
            let ch = band_idx / TILE_SIZE;
            let r = band_idx % TILE_SIZE;
            for t in 0..TILE_SIZE {
                data[(ch * TILE_SIZE + r) * TILE_SIZE + t] = normalized.at(row, t) as f32;
            }
        }
        tiles.push(Tile {
            data,
            row_map,
            meta,
        });
    }
    Ok(tiles)
}

/// Linear frequency interpolation from `n_bands` band-center rows back to
/// `out_rows` bin rows, per column; ends extend by the nearest value.
pub fn interpolate_rows(spec: &Spectrogram, out_rows: usize) -> Result<Spectrogram> {
    let n_bands = spec.n_bins;
    if out_rows < n_bands {
        return Err(Error::Shape(format!(
            "interpolate_rows expects out_rows >= {n_bands}, got {out_rows}"
        )));
    }
    let centers = band_centers(out_rows, n_bands);
    let mut data = vec![0.0; out_rows * spec.n_frames];
    for r in 0..out_rows {
        let x = r as f64;
        // band index whose center is the left bracket of x
        let i = match centers.iter().position(|&c| c > x) {
            Some(0) => None,            // below the first center: clamp low
            Some(j) => Some(j - 1),     // centers[j-1] <= x < centers[j]
            None => Some(n_bands - 1),  // above the last center: clamp high
        };
        for t in 0..spec.n_frames {
            let v = match i {
                None => spec.at(0, t),
                Some(j) if j + 1 >= n_bands => spec.at(n_bands - 1, t),
                Some(j) => {
                    let (c0, c1) = (centers[j], centers[j + 1]);
                    let w = (x - c0) / (c1 - c0);
                    spec.at(j, t) * (1.0 - w) + spec.at(j + 1, t) * w
                }
            };
            data[r * spec.n_frames + t] = v;
        }
    }
    Ok(Spectrogram {
        data,
        n_bins: out_rows,
        n_frames: spec.n_frames,
        bin_hz: spec.bin_hz * n_bands as f64 / out_rows as f64,
        frame_hop_s: spec.frame_hop_s,
        kind: spec.kind,
    })
}

/// Stack a tile's three channels back into a 192-row power spectrogram
/// block using its own normalization meta.
pub fn tile_to_power_block(tile: &Tile) -> Result<Spectrogram> {
    let mut data = vec![0.0f64; TILE_ROWS * TILE_SIZE];
    for ch in 0..TILE_CHANNELS {
        for r in 0..TILE_SIZE {
            for t in 0..TILE_SIZE {
                data[(ch * TILE_SIZE + r) * TILE_SIZE + t] = tile.at(ch, r, t) as f64;
            }
        }
    }
    let normalized = Spectrogram {
        data,
        n_bins: TILE_ROWS,
        n_frames: TILE_SIZE,
        bin_hz: 0.0,
        frame_hop_s: 0.0,
        kind: SpecKind::LogNormalized,
    };
    invert_normalization(&normalized, &tile.meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io;

    fn constant_buffer(n: usize, value: f64) -> AudioBuffer {
        AudioBuffer::new(vec![vec![value; n]], 22_050, "const").unwrap()
    }

    #[test]
    fn dc_signal_concentrates_in_low_bins() {
        let cfg = StftConfig::new(256, 128, 256).unwrap();
        let buf = constant_buffer(256, 1.0);
        let spec = stft(&buf, &cfg).unwrap();
        let window_sum: f64 = cfg.window().iter().sum();
        assert!((spec.at(0, 0).norm() - window_sum).abs() < 1e-9 * window_sum);
        // Hann DFT: bin 1 is exactly N/4, bins >= 2 vanish
        assert!((spec.at(1, 0).norm() - 256.0 / 4.0).abs() < 1e-9 * 64.0);
        for k in 2..spec.n_bins() {
            assert!(
                spec.at(k, 0).norm() < 1e-9 * window_sum,
                "bin {k} = {}",
                spec.at(k, 0).norm()
            );
        }
    }

    #[test]
    fn cosine_peaks_at_its_bin() {
        let n = 512;
        let cfg = StftConfig::new(n, n, n).unwrap();
        let k0 = 37;
        let x: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * k0 as f64 * i as f64 / n as f64).cos())
            .collect();
        let buf = AudioBuffer::new(vec![x], 22_050, "cos").unwrap();
        let spec = stft(&buf, &cfg).unwrap();
        let mags: Vec<f64> = (0..spec.n_bins()).map(|k| spec.at(k, 0).norm()).collect();
        let argmax = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, k0);
        // windowed cosine closed form: |X(k0)| = 0.5 * W(0) = N/4
        assert!((mags[k0] - n as f64 / 4.0).abs() < 1e-9 * n as f64);
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = Rng::new(2);
        let n = 1000;
        let x: Vec<f64> = (0..n).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let buf = AudioBuffer::new(vec![x.clone()], 22_050, "p").unwrap();
        let cfg = StftConfig::new(256, 100, 256).unwrap();
        let spec = stft(&buf, &cfg).unwrap();
        let window = cfg.window();
        // check a frame fully inside the signal
        let t = 2;
        let start = t * cfg.hop;
        let time_energy: f64 = (0..cfg.window_len)
            .map(|i| {
                let v = x[start + i] * window[i];
                v * v
            })
            .sum();
        let mut freq_energy = spec.at(0, t).norm_sqr() + spec.at(cfg.fft_len / 2, t).norm_sqr();
        for k in 1..cfg.fft_len / 2 {
            freq_energy += 2.0 * spec.at(k, t).norm_sqr();
        }
        freq_energy /= cfg.fft_len as f64;
        assert!(
            (freq_energy - time_energy).abs() < 1e-9 * time_energy,
            "{freq_energy} vs {time_energy}"
        );
    }

    #[test]
    fn too_short_buffer_is_an_error() {
        let cfg = StftConfig::new(256, 128, 256).unwrap();
        let buf = constant_buffer(100, 0.5);
        match stft(&buf, &cfg) {
            Err(Error::TooShort { len: 100, min: 256 }) => {}
            other => panic!("expected TooShort, got {other:?}"),
        }
    }

    #[test]
    fn frame_count_formula() {
        let cfg = StftConfig::new(2048, 512, 2048).unwrap();
        assert_eq!(cfg.n_frames(2048), 1);
        assert_eq!(cfg.n_frames(2049), 2);
        assert_eq!(cfg.n_frames(32_400), 61);
    }

    #[test]
    fn stft_fixed_frames_pads_to_tile_width() {
        let cfg = StftConfig::tile_default();
        let buf = constant_buffer(32_400, 0.25);
        let spec = stft_fixed_frames(&buf, &cfg, TILE_SIZE).unwrap();
        assert_eq!(spec.n_frames(), TILE_SIZE);
        assert_eq!(spec.n_bins(), 1025);
    }

    #[test]
    fn power_is_squared_magnitude() {
        let spec = ComplexSpectrogram {
            data: vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)],
            n_bins: 2,
            n_frames: 1,
            bin_hz: 1.0,
            frame_hop_s: 1.0,
        };
        let p = power(&spec);
        assert_eq!(p.at(0, 0), 25.0);
        assert_eq!(p.at(1, 0), 0.0);
    }

    #[test]
    fn log_normalize_endpoints() {
        let eps = 1e-3;
        let data = vec![0.0, std::f64::consts::E - eps];
        let spec = Spectrogram::new(data, 2, 1, 1.0, 1.0, SpecKind::Power).unwrap();
        let (out, meta) = log_normalize(&spec, eps).unwrap();
        assert!((out.at(0, 0) + 1.0).abs() < 1e-12);
        assert!((out.at(1, 0) - 1.0).abs() < 1e-12);
        assert!((meta.min_log - eps.ln()).abs() < 1e-12);
        assert!((meta.max_log - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_normalize_degenerate_constant() {
        let spec = Spectrogram::new(vec![2.5; 6], 2, 3, 1.0, 1.0, SpecKind::Power).unwrap();
        let (out, meta) = log_normalize(&spec, 1e-6).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(meta.is_degenerate());
    }

    #[test]
    fn normalize_invert_round_trip() {
        let mut rng = Rng::new(77);
        let data: Vec<f64> = (0..400).map(|_| rng.uniform() * 1e4).collect();
        let spec = Spectrogram::new(data.clone(), 20, 20, 1.0, 1.0, SpecKind::Power).unwrap();
        let eps = default_epsilon(&spec);
        let (norm, meta) = log_normalize(&spec, eps).unwrap();
        assert!(norm.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
        let back = invert_normalization(&norm, &meta).unwrap();
        for (a, b) in back.data().iter().zip(&data) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(eps), "{a} vs {b}");
        }
    }

    #[test]
    fn band_partition_1025_to_192() {
        let bands = band_partition(1025, 192);
        assert_eq!(bands.len(), 192);
        assert_eq!(bands[0].0, 0);
        assert_eq!(bands.last().unwrap().1, 1025);
        let mut covered = 0;
        for &(s, e) in &bands {
            assert_eq!(s, covered, "bands must be contiguous");
            let size = e - s;
            assert!(size == 5 || size == 6, "band size {size}");
            covered = e;
        }
        assert_eq!(covered, 1025);
    }

    #[test]
    fn downsample_identity_and_constant() {
        let spec = Spectrogram::new(vec![3.0; 192 * 4], 192, 4, 1.0, 1.0, SpecKind::Power).unwrap();
        let same = downsample_rows(&spec, 192).unwrap();
        assert_eq!(same.data(), spec.data());

        let big = Spectrogram::new(vec![3.0; 1025 * 4], 1025, 4, 1.0, 1.0, SpecKind::Power).unwrap();
        let down = downsample_rows(&big, 192).unwrap();
        assert_eq!(down.n_bins(), 192);
        assert!(down.data().iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn downsample_is_band_mean() {
        let mut rng = Rng::new(8);
        let data: Vec<f64> = (0..1025 * 3).map(|_| rng.uniform()).collect();
        let spec = Spectrogram::new(data, 1025, 3, 1.0, 1.0, SpecKind::Power).unwrap();
        let down = downsample_rows(&spec, 192).unwrap();
        let bands = band_partition(1025, 192);
        for (b, &(s, e)) in bands.iter().enumerate() {
            for t in 0..3 {
                let mean: f64 = (s..e).map(|r| spec.at(r, t)).sum::<f64>() / (e - s) as f64;
                assert!((down.at(b, t) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bootstrap_tiles_counts_shapes_and_determinism() {
        let buf = audio_io::gen_white_noise(1.5, 22_050, 5).unwrap();
        let spec = power(&stft_fixed_frames(&buf, &StftConfig::tile_default(), TILE_SIZE).unwrap());
        let tiles = bootstrap_tiles(&spec, 30, 99).unwrap();
        assert_eq!(tiles.len(), 30);
        let again = bootstrap_tiles(&spec, 30, 99).unwrap();
        assert_eq!(tiles, again);
        let other = bootstrap_tiles(&spec, 30, 100).unwrap();
        assert_ne!(tiles, other);
        for tile in &tiles {
            assert_eq!(tile.data.len(), TILE_LEN);
            assert!(tile.data.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn bootstrap_row_maps_respect_bands() {
        let buf = audio_io::gen_white_noise(1.5, 22_050, 5).unwrap();
        let spec = power(&stft_fixed_frames(&buf, &StftConfig::tile_default(), TILE_SIZE).unwrap());
        let bands = band_partition(spec.n_bins(), TILE_ROWS);
        for tile in bootstrap_tiles(&spec, 10, 4).unwrap() {
            assert_eq!(tile.row_map.len(), TILE_ROWS);
            for (i, &row) in tile.row_map.iter().enumerate() {
                let (s, e) = bands[i];
                assert!((s..e).contains(&row), "row {row} outside band {i} [{s},{e})");
            }
            for w in tile.row_map.windows(2) {
                assert!(w[0] < w[1], "row_map not strictly increasing");
            }
        }
    }

    #[test]
    fn bootstrap_rejects_wrong_frame_count() {
        let spec = Spectrogram::new(vec![1.0; 1025 * 10], 1025, 10, 1.0, 1.0, SpecKind::Power).unwrap();
        assert!(matches!(bootstrap_tiles(&spec, 1, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn interpolate_constant_and_linear() {
        let constant = Spectrogram::new(vec![4.2; 192 * 2], 192, 2, 1.0, 1.0, SpecKind::Power).unwrap();
        let up = interpolate_rows(&constant, 1025).unwrap();
        assert_eq!(up.n_bins(), 1025);
        assert!(up.data().iter().all(|&v| (v - 4.2).abs() < 1e-12));

        // values linear in the band-center coordinate stay linear in bins
        let centers = band_centers(1025, 192);
        let data: Vec<f64> = centers.iter().map(|&c| 3.0 * c + 1.0).collect();
        let ramp = Spectrogram::new(data, 192, 1, 1.0, 1.0, SpecKind::Power).unwrap();
        let up = interpolate_rows(&ramp, 1025).unwrap();
        let lo = centers[0].ceil() as usize;
        let hi = centers[191].floor() as usize;
        for r in lo..=hi {
            let expect = 3.0 * r as f64 + 1.0;
            assert!(
                (up.at(r, 0) - expect).abs() < 1e-9 * expect.abs(),
                "bin {r}: {} vs {expect}",
                up.at(r, 0)
            );
        }
    }

    #[test]
    fn downsample_of_interpolation_is_near_identity_for_smooth_rows() {
        // smooth profile over 192 bands
        let n = 192;
        let data: Vec<f64> = (0..n)
            .map(|i| 2.0 + (std::f64::consts::TAU * i as f64 / n as f64 * 2.0).sin())
            .collect();
        let spec = Spectrogram::new(data.clone(), n, 1, 1.0, 1.0, SpecKind::Power).unwrap();
        let up = interpolate_rows(&spec, 1025).unwrap();
        let down = downsample_rows(&up, n).unwrap();
        for (i, &orig) in data.iter().enumerate() {
            assert!(
                (down.at(i, 0) - orig).abs() < 0.01 * orig.abs(),
                "band {i}: {} vs {orig}",
                down.at(i, 0)
            );
        }
    }

    #[test]
    fn istft_reconstructs_interior_of_signal() {
        let buf = audio_io::gen_white_noise(0.2, 22_050, 3).unwrap();
        let cfg = StftConfig::new(512, 128, 512).unwrap();
        let spec = stft(&buf, &cfg).unwrap();
        let back = istft(&spec, &cfg, 22_050).unwrap();
        // interior samples (edges lack full overlap) must match closely
        for i in cfg.window_len..(buf.len() - cfg.window_len) {
            assert!(
                (back.channel(0)[i] - buf.channel(0)[i]).abs() < 1e-9,
                "sample {i}"
            );
        }
    }

    #[test]
    fn tile_round_trip_to_power_block() {
        let buf = audio_io::gen_white_noise(1.5, 22_050, 5).unwrap();
        let spec = power(&stft_fixed_frames(&buf, &StftConfig::tile_default(), TILE_SIZE).unwrap());
        let tile = bootstrap_tiles(&spec, 1, 12).unwrap().remove(0);
        let block = tile_to_power_block(&tile).unwrap();
        assert_eq!(block.n_bins(), TILE_ROWS);
        assert_eq!(block.n_frames(), TILE_SIZE);
        // every reconstructed value equals the source spectrogram row within f32 error
        for (band, &row) in tile.row_map.iter().enumerate() {
            for t in 0..TILE_SIZE {
                let orig = spec.at(row, t);
                let got = block.at(band, t);
                let tol = 1e-5 * orig.abs().max(default_epsilon(&spec)) + 1e-4 * spec.max_value() * 1e-3;
                assert!(
                    (got - orig).abs() < tol.max(1e-6 * spec.max_value()),
                    "band {band} frame {t}: {got} vs {orig}"
                );
            }
        }
    }
}
