//! Browser demo exposing three interactive operations on the analysis and
//! synthesis pipeline: cyclic-spectrum analysis of generated test signals,
//! the same analysis on an uploaded WAV, and Griffin-Lim phase
//! reconstruction of synthetic spectrogram patterns.
//!
//! Every export returns a JSON string; failures come back as
//! `{"error": "..."}` so the page never deals with exceptions.

use serde_json::json;
use wasm_bindgen::prelude::*;

use cyclospec::audio_io::{self, AudioBuffer};
use cyclospec::cyclostationary::{self, CyclicSpectrum};
use cyclospec::rng::Rng;
use cyclospec::spectral::{self, SpecKind, Spectrogram, StftConfig};
use cyclospec::synthesis;

const FS: u32 = 22_050;

/// Display-size cap for matrices shipped to the canvas.
const MAX_ROWS: usize = 256;
const MAX_COLS: usize = 384;

fn round3(v: f64) -> f64 {
    if v.is_finite() {
        (v * 1000.0).round() / 1000.0
    } else {
        0.0
    }
}

/// Downsample a row-major matrix by block means to fit the display cap,
/// returning (rows, cols, data).
fn shrink(rows: usize, cols: usize, data: &[f64]) -> (usize, usize, Vec<f64>) {
    let r_step = rows.div_ceil(MAX_ROWS);
    let c_step = cols.div_ceil(MAX_COLS);
    if r_step == 1 && c_step == 1 {
        return (rows, cols, data.to_vec());
    }
    let out_rows = rows.div_ceil(r_step);
    let out_cols = cols.div_ceil(c_step);
    let mut out = vec![0.0; out_rows * out_cols];
    for orow in 0..out_rows {
        for ocol in 0..out_cols {
            let mut acc = 0.0;
            let mut count = 0.0;
            for r in orow * r_step..((orow + 1) * r_step).min(rows) {
                for c in ocol * c_step..((ocol + 1) * c_step).min(cols) {
                    acc += data[r * cols + c];
                    count += 1.0;
                }
            }
            out[orow * out_cols + ocol] = acc / count;
        }
    }
    (out_rows, out_cols, out)
}

fn log_matrix(data: &[f64]) -> Vec<f64> {
    data.iter().map(|&v| (v.max(0.0) + 1e-300).ln()).collect()
}

fn matrix_json(rows: usize, cols: usize, data: &[f64]) -> serde_json::Value {
    let rounded: Vec<f64> = data.iter().map(|&v| round3(v)).collect();
    json!({"rows": rows, "cols": cols, "data": rounded})
}

fn analysis_json(buffer: &AudioBuffer) -> Result<serde_json::Value, cyclospec::Error> {
    let mono = audio_io::to_mono(buffer);
    // display spectrogram: 46 ms window, 75% overlap
    let spec_cfg = StftConfig::new(1024, 256, 1024)?;
    let power = spectral::power(&spectral::stft(&mono, &spec_cfg)?);
    let (sr, sc, sdata) = shrink(power.n_bins(), power.n_frames(), &log_matrix(power.data()));

    // cyclic spectrum: 0.2 s window for a 10 Hz alpha grid
    let scd_cfg = StftConfig::new(4410, 105, 4410)?;
    let scd: CyclicSpectrum = cyclostationary::estimate_scd(&mono, &scd_cfg, 100.0)?;
    let mags = scd.magnitude_matrix();
    let (cr, cc, cdata) = shrink(scd.n_f(), scd.n_alpha(), &log_matrix(&mags));
    let profile = cyclostationary::cyclic_profiles(&scd);
    let features = cyclostationary::extract_features(&mono, &scd_cfg, 100.0)?;
    let f = features.as_array();
    Ok(json!({
        "sample_rate": mono.sample_rate(),
        "duration_s": round3(mono.duration_s()),
        "spectrogram": matrix_json(sr, sc, &sdata),
        "scd": matrix_json(cr, cc, &cdata),
        "alpha_grid": scd.alpha_grid,
        "profiles": {
            "alpha": profile.alpha_grid,
            "mean": profile.mean_profile,
            "max": profile.max_profile,
        },
        "features": {
            "phi1": f[0], "phi2": f[1], "phi3": f[2], "phi4": f[3],
            "phi5": f[4], "phi6": f[5], "phi7": f[6], "phi8": f[7],
        },
    }))
}

fn err_json(e: impl std::fmt::Display) -> String {
    json!({ "error": e.to_string() }).to_string()
}

fn generate_signal(kind: &str, param: f64, seed: u64, duration_s: f64) -> Result<AudioBuffer, cyclospec::Error> {
    let duration = duration_s.clamp(0.5, 10.0);
    match kind {
        "white" => audio_io::gen_white_noise(duration, FS, seed),
        "am" => audio_io::gen_am_noise(duration, FS, param.clamp(5.0, 100.0), seed),
        "tone_mix" => {
            let tone = audio_io::gen_tone(duration, FS, param.clamp(50.0, 8000.0), 0.35)?;
            let noise = audio_io::gen_white_noise(duration, FS, seed)?;
            let mix: Vec<f64> = tone
                .channel(0)
                .iter()
                .zip(noise.channel(0))
                .map(|(t, n)| t + 0.5 * n)
                .collect();
            AudioBuffer::new(vec![mix], FS, "tone-mix")
        }
        other => Err(cyclospec::Error::Config(format!(
            "unknown signal kind '{other}'"
        ))),
    }
}

/// Analyze a generated test signal. kind: "white" | "am" | "tone_mix";
/// param: AM cyclic frequency or tone frequency in Hz.
#[wasm_bindgen]
pub fn analyze_generated(kind: &str, param: f64, seed: u32, duration_s: f64) -> String {
    let result = generate_signal(kind, param, seed as u64, duration_s)
        .and_then(|buffer| analysis_json(&buffer));
    match result {
        Ok(v) => v.to_string(),
        Err(e) => err_json(e),
    }
}

/// Analyze an uploaded WAV (PCM int 8/16/24 or float 32, 1-2 channels).
/// Long uploads are truncated to the first 10 seconds.
#[wasm_bindgen]
pub fn analyze_wav(bytes: &[u8]) -> String {
    let result = audio_io::load_wav_bytes(bytes, "upload").and_then(|buffer| {
        let max_len = 10 * buffer.sample_rate() as usize;
        let buffer = if buffer.len() > max_len {
            let channels = buffer
                .channels()
                .iter()
                .map(|c| c[..max_len].to_vec())
                .collect();
            AudioBuffer::new(channels, buffer.sample_rate(), buffer.source_label.clone())?
        } else {
            buffer
        };
        analysis_json(&buffer)
    });
    match result {
        Ok(v) => v.to_string(),
        Err(e) => err_json(e),
    }
}

fn pattern_spectrogram(pattern: &str, period: usize, seed: u64) -> Result<Spectrogram, cyclospec::Error> {
    let rows = 192;
    let cols = 128;
    let mut rng = Rng::substream(seed, 0x50415454);
    let mut data = vec![0.0f64; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            // low-pass envelope over frequency rows
            let envelope = (-(r as f64) / 60.0).exp();
            let v = match pattern {
                "stripes" => {
                    if (c / period) % 2 == 0 {
                        1.0
                    } else {
                        0.05
                    }
                }
                "checker" => {
                    if ((c / period) + (r / 24)) % 2 == 0 {
                        1.0
                    } else {
                        0.05
                    }
                }
                "blobs" => {
                    let phase = (c as f64 / period as f64) * std::f64::consts::TAU;
                    0.5 + 0.5 * phase.sin() * ((r as f64 / 30.0).sin())
                }
                _ => {
                    return Err(cyclospec::Error::Config(format!(
                        "unknown pattern '{pattern}'"
                    )))
                }
            };
            data[r * cols + c] = (v * envelope + 1e-4 * rng.uniform()).max(0.0);
        }
    }
    Spectrogram::new(data, rows, cols, 1.0, 1.0, SpecKind::Power)
}

/// Build a synthetic 192-row power pattern, interpolate to full frequency
/// resolution, and reconstruct a waveform with Griffin-Lim. Returns the
/// waveform, the per-iteration spectral error, and the spectrogram image.
#[wasm_bindgen]
pub fn griffin_lim_demo(pattern: &str, period: u32, iters: u32, momentum: f64, seed: u32) -> String {
    let run = || -> Result<serde_json::Value, cyclospec::Error> {
        let stft_cfg = StftConfig::tile_default();
        let spec = pattern_spectrogram(pattern, period.clamp(2, 32) as usize, seed as u64)?;
        let full = spectral::interpolate_rows(&spec, stft_cfg.n_bins())?;
        let result = synthesis::griffin_lim(
            &full,
            &stft_cfg,
            (iters as usize).clamp(1, 200),
            momentum.clamp(0.0, 0.99),
            FS,
            seed as u64,
        )?;
        let (sr, sc, sdata) = shrink(full.n_bins(), full.n_frames(), &log_matrix(full.data()));
        let samples: Vec<f64> = result
            .audio
            .channel(0)
            .iter()
            .map(|&v| (v * 10000.0).round() / 10000.0)
            .collect();
        Ok(json!({
            "sample_rate": FS,
            "samples": samples,
            "errors": result.errors.iter().map(|&e| round3(e * 1000.0) / 1000.0).collect::<Vec<f64>>(),
            "spectrogram": matrix_json(sr, sc, &sdata),
            "zero_energy": result.zero_energy,
        }))
    };
    match run() {
        Ok(v) => v.to_string(),
        Err(e) => err_json(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analyze_generated_returns_complete_json() {
        let out = analyze_generated("am", 40.0, 3, 1.0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v.get("error").is_none(), "{out}");
        assert_eq!(v["sample_rate"], 22_050);
        assert!(v["features"]["phi8"].as_f64().unwrap() > 0.0);
        assert!(v["spectrogram"]["rows"].as_u64().unwrap() <= MAX_ROWS as u64);
        assert!(v["scd"]["cols"].as_u64().unwrap() >= 2);
        let alpha = v["profiles"]["alpha"].as_array().unwrap();
        assert!(alpha.len() >= 2);
    }

    #[test]
    fn analyze_generated_rejects_unknown_kind() {
        let out = analyze_generated("nope", 0.0, 1, 1.0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v["error"].as_str().unwrap().contains("nope"));
    }

    #[test]
    fn analyze_wav_round_trip() {
        let noise = audio_io::gen_white_noise(1.0, FS, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        audio_io::save_wav(&noise, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let out = analyze_wav(&bytes);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v.get("error").is_none(), "{out}");
        // white noise: whole-clip power-spectrum sparsity near one half
        let phi8 = v["features"]["phi8"].as_f64().unwrap();
        assert!((phi8 - 0.5).abs() < 0.1, "phi8 {phi8}");

        let garbage = analyze_wav(b"not a wav at all");
        let v: serde_json::Value = serde_json::from_str(&garbage).unwrap();
        assert!(v["error"].as_str().unwrap().contains("RIFF"));
    }

    #[test]
    fn griffin_lim_demo_produces_audio_and_errors() {
        let out = griffin_lim_demo("stripes", 8, 12, 0.9, 4);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v.get("error").is_none(), "{out}");
        let samples = v["samples"].as_array().unwrap();
        assert!(samples.len() > 22_050);
        let errors = v["errors"].as_array().unwrap();
        assert_eq!(errors.len(), 12);
        assert!(samples.iter().all(|s| s.as_f64().unwrap().abs() <= 1.0));
    }
}
