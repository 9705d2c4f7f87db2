//! Generated tiles to audible clips: reassemble 192-row power spectrograms,
//! concatenate to the target duration, smooth, dither, interpolate back to
//! full frequency resolution, and reconstruct phase with Griffin-Lim.

use num_complex::Complex64;

use crate::audio_io::AudioBuffer;
use crate::error::{Error, Result};
use crate::gan::tensor::Scalar;
use crate::gan::{self, GanModel};
use crate::rng::Rng;
use crate::spectral::{
    interpolate_rows, istft, stft, tile_to_power_block, ComplexSpectrogram, SpecKind, Spectrogram,
    StftConfig, Tile, TILE_ROWS, TILE_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    pub clip_duration_s: f64,
    pub time_smooth_frames: usize,
    pub freq_smooth_bins: usize,
    pub noise_floor_rel: f64,
    pub griffin_lim_iters: usize,
    /// Over-relaxation factor for the phase projection; 0 is the plain
    /// alternating projection, 0.9 converges several times faster and
    /// keeps the error sequence monotone.
    pub griffin_lim_momentum: f64,
    pub sample_rate: u32,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            clip_duration_s: 10.0,
            time_smooth_frames: 5,
            freq_smooth_bins: 7,
            noise_floor_rel: 1e-4,
            griffin_lim_iters: 100,
            griffin_lim_momentum: 0.9,
            sample_rate: 22_050,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_duration_s <= 0.0 {
            return Err(Error::Config("clip_duration_s must be positive".into()));
        }
        for (name, w) in [
            ("time_smooth_frames", self.time_smooth_frames),
            ("freq_smooth_bins", self.freq_smooth_bins),
        ] {
            if w == 0 || w % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd and >= 1")));
            }
        }
        if self.noise_floor_rel < 0.0 {
            return Err(Error::Config("noise_floor_rel must be >= 0".into()));
        }
        if self.griffin_lim_iters == 0 {
            return Err(Error::Config("griffin_lim_iters must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.griffin_lim_momentum) {
            return Err(Error::Config(
                "griffin_lim_momentum must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Pick two tiles at random and concatenate their 192x64 power blocks in a
/// random order until the target frame count is covered, then truncate.
pub fn assemble_spectrogram(
    tiles: &[Tile],
    duration_s: f64,
    stft_cfg: &StftConfig,
    sample_rate: u32,
    seed: u64,
) -> Result<Spectrogram> {
    if tiles.len() < 2 {
        return Err(Error::Config(format!(
            "assemble_spectrogram needs at least 2 tiles, got {}",
            tiles.len()
        )));
    }
    let n_samples = (duration_s * sample_rate as f64).round() as usize;
    let target_frames = stft_cfg.n_frames(n_samples.max(stft_cfg.window_len));
    let mut rng = Rng::substream(seed, 0x41534d42); // "ASMB"
    let first = rng.below(tiles.len());
    let mut second = rng.below(tiles.len() - 1);
    if second >= first {
        second += 1;
    }
    let blocks = [
        tile_to_power_block(&tiles[first])?,
        tile_to_power_block(&tiles[second])?,
    ];
    let mut data = vec![0.0f64; TILE_ROWS * target_frames];
    let mut col = 0usize;
    while col < target_frames {
        let block = &blocks[rng.below(2)];
        let take = TILE_SIZE.min(target_frames - col);
        for r in 0..TILE_ROWS {
            for t in 0..take {
                data[r * target_frames + col + t] = block.at(r, t);
            }
        }
        col += take;
    }
    Spectrogram::new(
        data,
        TILE_ROWS,
        target_frames,
        sample_rate as f64 / stft_cfg.fft_len as f64 * (stft_cfg.n_bins() as f64 / TILE_ROWS as f64),
        stft_cfg.hop as f64 / sample_rate as f64,
        SpecKind::Power,
    )
}

fn reflect(i: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = i;
    // reflection padding without repeating the edge sample
    loop {
        if i < 0 {
            i = -i;
        } else if i >= len {
            i = 2 * len - 2 - i;
        } else {
            return i as usize;
        }
        if len == 1 {
            return 0;
        }
    }
}

fn moving_average_rows(data: &mut Vec<f64>, rows: usize, cols: usize, window: usize) {
    if window <= 1 {
        return;
    }
    let half = (window / 2) as isize;
    let inv = 1.0 / window as f64;
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        for c in 0..cols {
            let mut acc = 0.0;
            for d in -half..=half {
                acc += row[reflect(c as isize + d, cols)];
            }
            out[r * cols + c] = acc * inv;
        }
    }
    *data = out;
}

fn moving_average_cols(data: &mut Vec<f64>, rows: usize, cols: usize, window: usize) {
    if window <= 1 {
        return;
    }
    let half = (window / 2) as isize;
    let inv = 1.0 / window as f64;
    let mut out = vec![0.0; data.len()];
    for c in 0..cols {
        for r in 0..rows {
            let mut acc = 0.0;
            for d in -half..=half {
                acc += data[reflect(r as isize + d, rows) * cols + c];
            }
            out[r * cols + c] = acc * inv;
        }
    }
    *data = out;
}

/// Separable moving average with reflection padding: time axis first, then
/// frequency.
pub fn smooth(spec: &Spectrogram, cfg: &SynthesisConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if spec.kind != SpecKind::Power {
        return Err(Error::Shape("smooth expects a power spectrogram".into()));
    }
    let rows = spec.n_bins();
    let cols = spec.n_frames();
    let mut data = spec.data().to_vec();
    moving_average_rows(&mut data, rows, cols, cfg.time_smooth_frames);
    moving_average_cols(&mut data, rows, cols, cfg.freq_smooth_bins);
    Spectrogram::new(data, rows, cols, spec.bin_hz, spec.frame_hop_s, SpecKind::Power)
}

/// Add per-cell nonnegative uniform noise on (0, noise_floor_rel * max].
pub fn dither(spec: &Spectrogram, noise_floor_rel: f64, seed: u64) -> Result<Spectrogram> {
    if spec.kind != SpecKind::Power {
        return Err(Error::Shape("dither expects a power spectrogram".into()));
    }
    if noise_floor_rel == 0.0 {
        return Ok(spec.clone());
    }
    let ceiling = noise_floor_rel * spec.max_value();
    let mut rng = Rng::substream(seed, 0x44495448); // "DITH"
    let data = spec
        .data()
        .iter()
        .map(|&v| v + ceiling * rng.uniform_open_left())
        .collect();
    Spectrogram::new(
        data,
        spec.n_bins(),
        spec.n_frames(),
        spec.bin_hz,
        spec.frame_hop_s,
        SpecKind::Power,
    )
}

#[derive(Debug, Clone)]
pub struct GriffinLimResult {
    pub audio: AudioBuffer,
    /// Relative spectral error after each iteration.
    pub errors: Vec<f64>,
    /// Set when the magnitude target had no energy; the output is silence.
    pub zero_energy: bool,
}

/// Alternating-projection phase reconstruction from a power spectrogram
/// (magnitudes are its square roots). Random phase init, seeded; the output
/// is peak-normalized to 0.97. `momentum` = 0 gives the plain iteration;
/// the 0.9 default reaches a given spectral error in far fewer iterations.
pub fn griffin_lim(
    power_spec: &Spectrogram,
    stft_cfg: &StftConfig,
    iters: usize,
    momentum: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<GriffinLimResult> {
    stft_cfg.validate()?;
    if power_spec.kind != SpecKind::Power {
        return Err(Error::Shape("griffin_lim expects a power spectrogram".into()));
    }
    if power_spec.n_bins() != stft_cfg.n_bins() {
        return Err(Error::Shape(format!(
            "griffin_lim: {} bins but config implies {}",
            power_spec.n_bins(),
            stft_cfg.n_bins()
        )));
    }
    if stft_cfg.hop * 2 > stft_cfg.window_len {
        return Err(Error::Config(
            "griffin_lim needs at least 50% window overlap".into(),
        ));
    }
    if power_spec.data().iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::UndefinedInput(
            "griffin_lim magnitude must be finite and nonnegative".into(),
        ));
    }
    let n_bins = power_spec.n_bins();
    let n_frames = power_spec.n_frames();
    let out_len = stft_cfg.window_len + (n_frames.saturating_sub(1)) * stft_cfg.hop;
    let mag: Vec<f64> = power_spec.data().iter().map(|&p| p.sqrt()).collect();
    let mag_norm: f64 = mag.iter().map(|m| m * m).sum::<f64>().sqrt();
    if mag_norm == 0.0 {
        let audio = AudioBuffer::new(vec![vec![0.0; out_len]], sample_rate, "griffin-lim-silence")?;
        return Ok(GriffinLimResult {
            audio,
            errors: vec![0.0; iters],
            zero_energy: true,
        });
    }

    let mut rng = Rng::substream(seed, 0x47524c4d); // "GRLM"
    let mut spectrum: Vec<Complex64> = mag
        .iter()
        .map(|&m| Complex64::from_polar(m, rng.range_f64(0.0, std::f64::consts::TAU)))
        .collect();
    let mut previous = spectrum.clone();
    let mut errors = Vec::with_capacity(iters);
    for _ in 0..iters {
        let extrapolated: Vec<Complex64> = spectrum
            .iter()
            .zip(&previous)
            .map(|(c, p)| c + (c - p).scale(momentum))
            .collect();
        let complex = ComplexSpectrogram::from_parts(
            extrapolated,
            n_bins,
            n_frames,
            power_spec.bin_hz,
            power_spec.frame_hop_s,
        )?;
        let audio = istft(&complex, stft_cfg, sample_rate)?;
        let reproj = stft(&audio, stft_cfg)?;
        debug_assert_eq!(reproj.n_frames(), n_frames);
        previous = spectrum;
        let mut err_sq = 0.0;
        spectrum = reproj
            .data()
            .iter()
            .zip(&mag)
            .map(|(&s, &target)| {
                let smag = s.norm();
                err_sq += (smag - target) * (smag - target);
                if smag > 0.0 {
                    s * (target / smag)
                } else {
                    Complex64::new(target, 0.0)
                }
            })
            .collect();
        errors.push(err_sq.sqrt() / mag_norm);
    }
    // one more synthesis from the final phase estimate
    let complex = ComplexSpectrogram::from_parts(
        spectrum,
        n_bins,
        n_frames,
        power_spec.bin_hz,
        power_spec.frame_hop_s,
    )?;
    let audio = istft(&complex, stft_cfg, sample_rate)?;
    let peak = audio
        .channel(0)
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v.abs()));
    let samples: Vec<f64> = if peak > 0.0 {
        let scale = 0.97 / peak;
        audio.channel(0).iter().map(|&v| v * scale).collect()
    } else {
        audio.channel(0).to_vec()
    };
    Ok(GriffinLimResult {
        audio: AudioBuffer::new(vec![samples], sample_rate, "griffin-lim")?,
        errors,
        zero_energy: false,
    })
}

/// Full synthesis pipeline: generate a 64-batch of tiles, assemble, smooth,
/// dither, interpolate 192 -> full bins, and reconstruct the waveform.
/// Also returns the full-resolution power spectrogram fed to Griffin-Lim.
pub fn synthesize_clip_with_spectrogram<T: Scalar>(
    model: &GanModel<T>,
    stft_cfg: &StftConfig,
    syn_cfg: &SynthesisConfig,
    seed: u64,
) -> Result<(AudioBuffer, Spectrogram)> {
    syn_cfg.validate()?;
    let tiles = gan::generate_batch(model, 64, seed ^ 0x54494c45)?;
    let assembled = assemble_spectrogram(
        &tiles,
        syn_cfg.clip_duration_s,
        stft_cfg,
        syn_cfg.sample_rate,
        seed ^ 0x434f4e43,
    )?;
    let smoothed = smooth(&assembled, syn_cfg)?;
    let dithered = dither(&smoothed, syn_cfg.noise_floor_rel, seed ^ 0x4e4f4953)?;
    let full = interpolate_rows(&dithered, stft_cfg.n_bins())?;
    let result = griffin_lim(
        &full,
        stft_cfg,
        syn_cfg.griffin_lim_iters,
        syn_cfg.griffin_lim_momentum,
        syn_cfg.sample_rate,
        seed ^ 0x50484153,
    )?;
    let mut audio = result.audio;
    audio.source_label = format!("synthesized-{seed}");
    Ok((audio, full))
}

/// [`synthesize_clip_with_spectrogram`] without the spectrogram.
pub fn synthesize_clip<T: Scalar>(
    model: &GanModel<T>,
    stft_cfg: &StftConfig,
    syn_cfg: &SynthesisConfig,
    seed: u64,
) -> Result<AudioBuffer> {
    Ok(synthesize_clip_with_spectrogram(model, stft_cfg, syn_cfg, seed)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io;
    use crate::spectral::{log_normalize, power as spec_power, NormalizationMeta};

    fn test_tiles(n: usize, seed: u64) -> Vec<Tile> {
        let buf = audio_io::gen_white_noise(1.6, 22_050, seed).unwrap();
        let spec = spec_power(
            &crate::spectral::stft_fixed_frames(&buf, &StftConfig::tile_default(), TILE_SIZE)
                .unwrap(),
        );
        crate::spectral::bootstrap_tiles(&spec, n, seed).unwrap()
    }

    #[test]
    fn assembled_width_two_blocks() {
        let tiles = test_tiles(4, 3);
        let cfg = StftConfig::tile_default();
        // duration for exactly 128 frames
        let n_samples = cfg.window_len + 127 * cfg.hop;
        let duration = n_samples as f64 / 22_050.0;
        let spec = assemble_spectrogram(&tiles, duration, &cfg, 22_050, 5).unwrap();
        assert_eq!(spec.n_frames(), 128);
        assert_eq!(spec.n_bins(), TILE_ROWS);
    }

    #[test]
    fn identical_tiles_give_periodic_output() {
        let tiles = test_tiles(1, 9);
        let pair = vec![tiles[0].clone(), tiles[0].clone()];
        let cfg = StftConfig::tile_default();
        let n_samples = cfg.window_len + (3 * TILE_SIZE - 1) * cfg.hop;
        let spec =
            assemble_spectrogram(&pair, n_samples as f64 / 22_050.0, &cfg, 22_050, 1).unwrap();
        for r in 0..spec.n_bins() {
            for t in 0..spec.n_frames() - TILE_SIZE {
                assert_eq!(spec.at(r, t), spec.at(r, t + TILE_SIZE));
            }
        }
    }

    #[test]
    fn every_column_has_tile_provenance() {
        let tiles = test_tiles(5, 21);
        let cfg = StftConfig::tile_default();
        let n_samples = cfg.window_len + 199 * cfg.hop;
        let spec =
            assemble_spectrogram(&tiles, n_samples as f64 / 22_050.0, &cfg, 22_050, 77).unwrap();
        let blocks: Vec<Spectrogram> = tiles.iter().map(|t| tile_to_power_block(t).unwrap()).collect();
        for t in 0..spec.n_frames() {
            let found = blocks.iter().any(|b| {
                (0..TILE_SIZE).any(|bt| (0..TILE_ROWS).all(|r| spec.at(r, t) == b.at(r, bt)))
            });
            assert!(found, "column {t} missing provenance");
        }
    }

    #[test]
    fn smooth_identity_cases() {
        let spec = Spectrogram::new(vec![2.5; 40 * 12], 40, 12, 1.0, 1.0, SpecKind::Power).unwrap();
        let cfg = SynthesisConfig::default();
        let out = smooth(&spec, &cfg).unwrap();
        for (a, b) in out.data().iter().zip(spec.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let one = SynthesisConfig {
            time_smooth_frames: 1,
            freq_smooth_bins: 1,
            ..cfg
        };
        let mut rng = Rng::new(3);
        let data: Vec<f64> = (0..480).map(|_| rng.uniform()).collect();
        let spec = Spectrogram::new(data.clone(), 40, 12, 1.0, 1.0, SpecKind::Power).unwrap();
        let out = smooth(&spec, &one).unwrap();
        assert_eq!(out.data(), &data[..]);
    }

    #[test]
    fn smooth_spreads_unit_impulse() {
        let mut data = vec![0.0; 21 * 21];
        data[10 * 21 + 10] = 1.0;
        let spec = Spectrogram::new(data, 21, 21, 1.0, 1.0, SpecKind::Power).unwrap();
        let cfg = SynthesisConfig {
            time_smooth_frames: 3,
            freq_smooth_bins: 3,
            ..SynthesisConfig::default()
        };
        let out = smooth(&spec, &cfg).unwrap();
        for r in 0..21 {
            for c in 0..21 {
                let expect = if (9..=11).contains(&r) && (9..=11).contains(&c) {
                    1.0 / 9.0
                } else {
                    0.0
                };
                assert!(
                    (out.at(r, c) - expect).abs() < 1e-12,
                    "({r},{c}) = {}",
                    out.at(r, c)
                );
            }
        }
    }

    #[test]
    fn smooth_preserves_interior_energy() {
        let mut rng = Rng::new(8);
        let rows = 120;
        let cols = 90;
        // interior-dominated: zero border band wider than the windows
        let mut data = vec![0.0; rows * cols];
        for r in 8..rows - 8 {
            for c in 8..cols - 8 {
                data[r * cols + c] = rng.uniform() + 0.1;
            }
        }
        let total: f64 = data.iter().sum();
        let spec = Spectrogram::new(data, rows, cols, 1.0, 1.0, SpecKind::Power).unwrap();
        let out = smooth(&spec, &SynthesisConfig::default()).unwrap();
        let total_after: f64 = out.data().iter().sum();
        assert!(
            (total_after - total).abs() < 0.01 * total,
            "{total_after} vs {total}"
        );
    }

    #[test]
    fn dither_properties() {
        let mut rng = Rng::new(4);
        let data: Vec<f64> = (0..300 * 100).map(|_| rng.uniform() * 10.0).collect();
        let spec = Spectrogram::new(data.clone(), 300, 100, 1.0, 1.0, SpecKind::Power).unwrap();
        let same = dither(&spec, 0.0, 5).unwrap();
        assert_eq!(same.data(), &data[..]);
        let floor = 1e-3;
        let out = dither(&spec, floor, 5).unwrap();
        let max = spec.max_value();
        let mut increment_sum = 0.0;
        for (a, b) in out.data().iter().zip(&data) {
            assert!(a > b, "dither must strictly increase every cell");
            increment_sum += a - b;
        }
        let mean_inc = increment_sum / data.len() as f64;
        let expect = floor * max / 2.0;
        assert!(
            (mean_inc - expect).abs() < 0.05 * expect,
            "mean increment {mean_inc} vs {expect}"
        );
    }

    fn tone_mixture_power(seed: u64) -> (Spectrogram, StftConfig) {
        let cfg = StftConfig::new(1024, 256, 1024).unwrap();
        let mut rng = Rng::new(seed);
        let f1 = 200.0 + 400.0 * rng.uniform();
        let f2 = 900.0 + 1500.0 * rng.uniform();
        let tone1 = audio_io::gen_tone(1.0, 22_050, f1, 0.4).unwrap();
        let tone2 = audio_io::gen_tone(1.0, 22_050, f2, 0.25).unwrap();
        let noise = audio_io::gen_white_noise(1.0, 22_050, seed).unwrap();
        let mix: Vec<f64> = (0..tone1.len())
            .map(|i| tone1.channel(0)[i] + tone2.channel(0)[i] + 0.3 * noise.channel(0)[i])
            .collect();
        let buf = AudioBuffer::new(vec![mix], 22_050, "mix").unwrap();
        (spec_power(&stft(&buf, &cfg).unwrap()), cfg)
    }

    #[test]
    fn griffin_lim_converges_on_real_magnitudes() {
        let (power_spec, cfg) = tone_mixture_power(11);
        let result = griffin_lim(&power_spec, &cfg, 100, 0.9, 22_050, 3).unwrap();
        assert!(!result.zero_energy);
        let final_err = *result.errors.last().unwrap();
        assert!(final_err < 0.05, "relative spectral error {final_err}");
        for w in result.errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-7, "error increased: {} -> {}", w[0], w[1]);
        }
        let peak = result
            .audio
            .channel(0)
            .iter()
            .fold(0.0_f64, |m, &v| m.max(v.abs()));
        assert!((peak - 0.97).abs() < 1e-9);
    }

    #[test]
    fn griffin_lim_zero_energy_flags_silence() {
        let cfg = StftConfig::new(512, 128, 512).unwrap();
        let spec = Spectrogram::new(vec![0.0; 257 * 20], 257, 20, 1.0, 1.0, SpecKind::Power).unwrap();
        let result = griffin_lim(&spec, &cfg, 10, 0.9, 22_050, 0).unwrap();
        assert!(result.zero_energy);
        assert!(result.audio.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn griffin_lim_rejects_low_overlap() {
        let cfg = StftConfig::new(512, 400, 512).unwrap();
        let spec = Spectrogram::new(vec![1.0; 257 * 4], 257, 4, 1.0, 1.0, SpecKind::Power).unwrap();
        assert!(matches!(
            griffin_lim(&spec, &cfg, 5, 0.9, 22_050, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn synthesize_clip_duration_and_determinism() {
        let gan_cfg = gan::GanConfig {
            latent_dim: 8,
            base_channels: 4,
            batch_size: 4,
            epochs: 1,
            iterations_per_set: 8,
            seed: 5,
            checkpoint_every: 0,
            ..gan::GanConfig::default()
        };
        let set = {
            // tiny set of real tiles so batch norm statistics are sane
            let tiles = test_tiles(8, 31);
            crate::dataset::TrainingSet {
                set_id: 1,
                tiles,
                source_mix: std::collections::BTreeMap::from([("x".to_string(), 1.0)]),
            }
        };
        let mut model: GanModel<f32> = gan::init_model(&gan_cfg).unwrap();
        gan::train(&mut model, std::slice::from_ref(&set), &gan_cfg, |_, _| Ok(())).unwrap();
        let stft_cfg = StftConfig::tile_default();
        let syn_cfg = SynthesisConfig {
            clip_duration_s: 2.0,
            griffin_lim_iters: 12,
            ..SynthesisConfig::default()
        };
        let clip = synthesize_clip(&model, &stft_cfg, &syn_cfg, 42).unwrap();
        let target = (2.0 * 22_050.0) as usize;
        let hop = stft_cfg.hop;
        assert!(
            clip.len() >= target - hop && clip.len() <= target + hop,
            "duration {} vs target {target}",
            clip.len()
        );
        assert!(clip.channel(0).iter().all(|&v| v.abs() <= 1.0));
        let again = synthesize_clip(&model, &stft_cfg, &syn_cfg, 42).unwrap();
        assert_eq!(clip, again);
        let other = synthesize_clip(&model, &stft_cfg, &syn_cfg, 43).unwrap();
        assert_ne!(clip, other);
    }

    #[test]
    fn normalize_invert_degenerate_meta_is_handled() {
        // tiles with degenerate meta (constant power segment) must not panic
        let spec =
            Spectrogram::new(vec![5.0; 1025 * TILE_SIZE], 1025, TILE_SIZE, 1.0, 1.0, SpecKind::Power)
                .unwrap();
        let (norm, meta) = log_normalize(&spec, 1e-6).unwrap();
        assert!(meta.is_degenerate());
        assert!(norm.data().iter().all(|&v| v == 0.0));
        let meta2 = NormalizationMeta {
            log_epsilon: 1e-6,
            min_log: meta.min_log,
            max_log: meta.max_log,
        };
        let tile = Tile {
            data: vec![0.0; crate::spectral::TILE_LEN],
            row_map: (0..TILE_ROWS).collect(),
            meta: meta2,
        };
        let block = tile_to_power_block(&tile).unwrap();
        assert!(block.data().iter().all(|&v| (v - 5.0).abs() < 1e-6 * 5.0));
    }
}
