//! Spectral correlation density, cyclic coherence, cyclic profiles, and the
//! eight scalar features Φ1–Φ8.
//!
//! The SCD estimator is an averaged cyclic periodogram: per STFT frame it
//! accumulates X_t(f + α/2) conj(X_t(f − α/2)) on the discrete bin grid
//! (α quantized to even bin offsets so the half-shift lands on whole bins),
//! de-rotates each frame product by exp(-j 2π α t·hop / fs) to keep frames
//! phase-coherent at cyclic frequency α, and divides by frame count and
//! window energy.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio_io::{self, AudioBuffer};
use crate::error::{Error, Result};
use crate::spectral::{stft_frames_two_sided, StftConfig};

pub const MIN_FRAMES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CyclicKind {
    Scd,
    Ccf,
}

/// Complex matrix over (f, α): either the spectral correlation density or
/// the cyclic coherence derived from it. α ≥ 0 only; the α = 0 column of an
/// SCD is the frame-averaged PSD.
#[derive(Debug, Clone)]
pub struct CyclicSpectrum {
    values: Vec<Complex64>,
    n_f: usize,
    n_alpha: usize,
    pub f_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub n_frames_averaged: usize,
    pub kind: CyclicKind,
}

impl CyclicSpectrum {
    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }

    #[inline]
    pub fn at(&self, f: usize, a: usize) -> Complex64 {
        self.values[f * self.n_alpha + a]
    }

    /// |SCD| (or |CCF|) as a row-major (f, α) matrix for export.
    pub fn magnitude_matrix(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// The α = 0 column (for an SCD: the averaged one-sided PSD).
    pub fn psd(&self) -> Vec<f64> {
        (0..self.n_f).map(|f| self.at(f, 0).re).collect()
    }
}

/// Univariate cyclic profiles: mean and max of |SCD| over frequency, per α.
#[derive(Debug, Clone)]
pub struct CyclicProfile {
    pub alpha_grid: Vec<f64>,
    pub mean_profile: Vec<f64>,
    pub max_profile: Vec<f64>,
}

/// Φ1–Φ8.
///
/// Φ1/Φ2/Φ3: mean, variance, Gini of the mean cyclic profile;
/// Φ4/Φ5/Φ6: the same for the max profile (α = 0 excluded from both);
/// Φ7/Φ8: variance and Gini over frequency of the clip's power spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub phi4: f64,
    pub phi5: f64,
    pub phi6: f64,
    pub phi7: f64,
    pub phi8: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.phi1, self.phi2, self.phi3, self.phi4, self.phi5, self.phi6, self.phi7,
            self.phi8,
        ]
    }
}

/// Estimate the spectral correlation density of a mono buffer up to cyclic
/// frequency `alpha_max` (Hz). The α grid is quantized to even bin offsets
/// of the STFT, i.e. multiples of 2 fs / fft_len.
pub fn estimate_scd(
    buffer: &AudioBuffer,
    cfg: &StftConfig,
    alpha_max: f64,
) -> Result<CyclicSpectrum> {
    if buffer.n_channels() != 1 {
        return Err(Error::Shape("estimate_scd expects a mono buffer".into()));
    }
    let fs = buffer.sample_rate() as f64;
    let frame_rate = fs / cfg.hop as f64;
    if alpha_max > frame_rate / 2.0 {
        return Err(Error::Config(format!(
            "alpha_max {alpha_max} Hz exceeds half the frame rate {:.3} Hz; reduce hop",
            frame_rate / 2.0
        )));
    }
    let frames = stft_frames_two_sided(buffer.channel(0), cfg)?;
    let n_frames = frames.len();
    if n_frames < MIN_FRAMES {
        return Err(Error::TooFewFrames {
            frames: n_frames,
            min: MIN_FRAMES,
        });
    }
    let fft_len = cfg.fft_len;
    let n_bins = cfg.n_bins();
    let bin_hz = fs / fft_len as f64;
    let h_max = (alpha_max / (2.0 * bin_hz)).floor() as usize;
    let alpha_grid: Vec<f64> = (0..=h_max).map(|h| 2.0 * h as f64 * bin_hz).collect();
    let f_grid: Vec<f64> = (0..n_bins).map(|k| k as f64 * bin_hz).collect();
    let norm = 1.0 / (n_frames as f64 * cfg.window_energy());

    // one α column per task; columns are independent so this is deterministic
    let columns: Vec<Vec<Complex64>> = crate::par::map_indexed(h_max + 1, |h| {
            let mut col = vec![Complex64::new(0.0, 0.0); n_bins];
            // per-frame de-rotation at α = 2 h Δf: phase step 2π·2h·hop/fft_len
            let step = std::f64::consts::TAU * (2 * h * cfg.hop) as f64 / fft_len as f64;
            for (t, frame) in frames.iter().enumerate() {
                let rot = Complex64::from_polar(1.0, -step * t as f64);
                for (k, slot) in col.iter_mut().enumerate() {
                    let up = frame[(k + h) % fft_len];
                    let down = frame[(k + fft_len - h) % fft_len];
                    *slot += up * down.conj() * rot;
                }
            }
            for v in col.iter_mut() {
                *v *= norm;
            }
            col
        });

    #[cfg(debug_assertions)]
    verify_hermitian_fold(&frames, &columns, cfg, norm);

    let mut values = vec![Complex64::new(0.0, 0.0); n_bins * (h_max + 1)];
    for (h, col) in columns.iter().enumerate() {
        for (k, &v) in col.iter().enumerate() {
            values[k * (h_max + 1) + h] = v;
        }
    }
    Ok(CyclicSpectrum {
        values,
        n_f: n_bins,
        n_alpha: h_max + 1,
        f_grid,
        alpha_grid,
        n_frames_averaged: n_frames,
        kind: CyclicKind::Scd,
    })
}

/// S(f, -α) must equal conj S(f, α); the estimator stores α >= 0 only, so
/// the identity is checked against an explicit negative-shift pass before
/// the fold is trusted.
#[cfg(debug_assertions)]
fn verify_hermitian_fold(
    frames: &[Vec<Complex64>],
    columns: &[Vec<Complex64>],
    cfg: &StftConfig,
    norm: f64,
) {
    let fft_len = cfg.fft_len;
    let h = columns.len() - 1;
    if h == 0 {
        return;
    }
    let n_bins = columns[0].len();
    let step = std::f64::consts::TAU * (2 * h * cfg.hop) as f64 / fft_len as f64;
    let mut neg = vec![Complex64::new(0.0, 0.0); n_bins];
    for (t, frame) in frames.iter().enumerate() {
        let rot = Complex64::from_polar(1.0, step * t as f64);
        for (k, slot) in neg.iter_mut().enumerate() {
            let up = frame[(k + fft_len - h) % fft_len];
            let down = frame[(k + h) % fft_len];
            *slot += up * down.conj() * rot;
        }
    }
    let scale: f64 = columns[h].iter().map(|v| v.norm()).sum::<f64>() / n_bins as f64;
    for (k, v) in neg.iter().enumerate() {
        let diff = (v * norm - columns[h][k].conj()).norm();
        debug_assert!(
            diff <= 1e-9 * scale.max(f64::MIN_POSITIVE),
            "hermitian symmetry violated at bin {k}: {diff}"
        );
    }
}

/// Cyclic coherence: S(f, α) / sqrt(P(f + α/2) P(f − α/2)) with P the α = 0
/// averaged PSD. Entries whose denominator falls under 1e-12 · max P are 0.
pub fn ccf(scd: &CyclicSpectrum) -> Result<CyclicSpectrum> {
    if scd.kind != CyclicKind::Scd {
        return Err(Error::Shape("ccf expects an SCD input".into()));
    }
    let n_f = scd.n_f;
    let n_alpha = scd.n_alpha;
    let fft_len = 2 * (n_f - 1);
    // two-sided PSD by even extension of the α = 0 column
    let psd = scd.psd();
    let psd_two: Vec<f64> = (0..fft_len)
        .map(|k| if k < n_f { psd[k] } else { psd[fft_len - k] })
        .collect();
    let max_p = psd.iter().cloned().fold(0.0_f64, f64::max);
    let floor = 1e-12 * max_p;
    let mut values = vec![Complex64::new(0.0, 0.0); n_f * n_alpha];
    for (h, _alpha) in scd.alpha_grid.iter().enumerate() {
        for k in 0..n_f {
            let up = psd_two[(k + h) % fft_len];
            let down = psd_two[(k + fft_len - h) % fft_len];
            let denom = (up * down).sqrt();
            values[k * n_alpha + h] = if denom > floor {
                scd.at(k, h) / denom
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
    Ok(CyclicSpectrum {
        values,
        n_f,
        n_alpha,
        f_grid: scd.f_grid.clone(),
        alpha_grid: scd.alpha_grid.clone(),
        n_frames_averaged: scd.n_frames_averaged,
        kind: CyclicKind::Ccf,
    })
}

/// Collapse an SCD to the two univariate α profiles: mean |S| and max |S|
/// over frequency.
pub fn cyclic_profiles(scd: &CyclicSpectrum) -> CyclicProfile {
    let n_f = scd.n_f as f64;
    let mut mean_profile = Vec::with_capacity(scd.n_alpha);
    let mut max_profile = Vec::with_capacity(scd.n_alpha);
    for a in 0..scd.n_alpha {
        let mut sum = 0.0;
        let mut max = 0.0_f64;
        for f in 0..scd.n_f {
            let m = scd.at(f, a).norm();
            sum += m;
            max = max.max(m);
        }
        mean_profile.push(sum / n_f);
        max_profile.push(max);
    }
    CyclicProfile {
        alpha_grid: scd.alpha_grid.clone(),
        mean_profile,
        max_profile,
    }
}

/// Gini coefficient G(S) = Σ_i Σ_j |s_i − s_j| / (2 n Σ_i s_i) evaluated in
/// O(n log n) via sorted prefix sums (identical to the double sum to within
/// rounding).
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedInput("gini of an empty set".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::UndefinedInput(
            "gini requires finite nonnegative values".into(),
        ));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedInput("gini of an all-zero set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    // ΣΣ|s_i − s_j| = 2 Σ_i (2i − n + 1) s_(i) for ascending s
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (2.0 * i as f64 - n + 1.0) * v)
        .sum();
    Ok(weighted / (n * total))
}

/// One-sided power spectrum of the whole clip via a single DFT: the Φ7/Φ8
/// domain. The full-clip transform (rather than a frame average) is what
/// gives white noise its exponential power distribution and hence a Gini
/// near 0.5.
pub fn clip_power_spectrum(buffer: &AudioBuffer) -> Result<Vec<f64>> {
    let mono = audio_io::to_mono(buffer);
    let x = mono.channel(0);
    if x.is_empty() {
        return Err(Error::TooShort { len: 0, min: 2 });
    }
    let n = x.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    Ok(buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance (divide by N).
fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Extract Φ1–Φ8. Stereo input is averaged to mono first. The α = 0 column
/// is excluded from the profile aggregation (the PSD column dwarfs the
/// cyclic columns).
pub fn extract_features(
    buffer: &AudioBuffer,
    cfg: &StftConfig,
    alpha_max: f64,
) -> Result<FeatureVector> {
    let mono = audio_io::to_mono(buffer);
    let scd = estimate_scd(&mono, cfg, alpha_max)?;
    if scd.n_alpha() < 2 {
        return Err(Error::Config(format!(
            "alpha_max {alpha_max} Hz admits no nonzero cyclic frequency on the grid (Δα = {:.3} Hz)",
            2.0 * scd.f_grid.get(1).copied().unwrap_or(0.0)
        )));
    }
    let profile = cyclic_profiles(&scd);
    let s_mean = &profile.mean_profile[1..];
    let s_max = &profile.max_profile[1..];
    let clip_spectrum = clip_power_spectrum(&mono)?;
    Ok(FeatureVector {
        phi1: mean(s_mean),
        phi2: variance(s_mean),
        phi3: gini(s_mean)?,
        phi4: mean(s_max),
        phi5: variance(s_max),
        phi6: gini(s_max)?,
        phi7: variance(&clip_spectrum),
        phi8: gini(&clip_spectrum)?,
    })
}
