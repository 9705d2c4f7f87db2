//! End-to-end command tests at tiny scale.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use cyclospec::audio_io;
use cyclospec_cli::{run, Cli};

fn invoke(args: &[&str]) -> anyhow::Result<()> {
    let mut argv = vec!["cyclospec"];
    argv.extend_from_slice(args);
    run(Cli::try_parse_from(argv)?)
}

fn write_noise_wavs(dir: &Path, labels: &[&str], seconds: f64) -> Vec<PathBuf> {
    labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let noise = audio_io::gen_white_noise(seconds, 22_050, 100 + i as u64).unwrap();
            let buf = cyclospec::AudioBuffer::new(
                noise.channels().to_vec(),
                noise.sample_rate(),
                label.to_string(),
            )
            .unwrap();
            let path = dir.join(format!("{label}.wav"));
            audio_io::save_wav(&buf, &path).unwrap();
            path
        })
        .collect()
}

fn tiny_config(dir: &Path, audios: &[PathBuf]) -> PathBuf {
    let audio_list = audios
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(";");
    let text = format!(
        "audios={audio_list}\n\
         seed=7\n\
         segments_per_audio=8\n\
         tiles_per_segment=2\n\
         n_sets=2\n\
         latent_dim=8\n\
         base_channels=4\n\
         batch_size=4\n\
         epochs=1\n\
         iterations_per_set=6\n\
         checkpoint_every=0\n\
         n_clips=2\n\
         clip_duration_s=1.5\n\
         griffin_lim_iters=8\n\
         feature_window_len=2048\n\
         feature_hop=128\n\
         feature_fft_len=2048\n\
         alpha_max=80\n"
    );
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn dir_file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[test]
fn pipeline_runs_and_is_byte_deterministic() {
    let root = tempfile::tempdir().unwrap();
    let audios = write_noise_wavs(root.path(), &["breath", "keys"], 3.0);
    let config = tiny_config(root.path(), &audios);

    let out_a = root.path().join("run_a");
    let out_b = root.path().join("run_b");
    invoke(&[
        "pipeline",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_a.to_str().unwrap(),
    ])
    .unwrap();
    invoke(&[
        "pipeline",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_b.to_str().unwrap(),
        "--jobs",
        "2",
    ])
    .unwrap();

    let manifest = fs::read_to_string(out_a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config_hash="));
    assert!(manifest.contains("checkpoint=model.ckpt"));
    assert_eq!(manifest.matches("clip=").count(), 2);

    let files_a = dir_file_bytes(&out_a);
    let files_b = dir_file_bytes(&out_b);
    assert_eq!(files_a.len(), files_b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in files_a.iter().zip(&files_b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "file {name_a} differs between runs");
    }
}

#[test]
fn pipeline_refuses_rerun_without_force() {
    let root = tempfile::tempdir().unwrap();
    let audios = write_noise_wavs(root.path(), &["one", "two"], 3.0);
    let config = tiny_config(root.path(), &audios);
    let out = root.path().join("run");
    invoke(&[
        "pipeline",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ])
    .unwrap();
    let err = invoke(&[
        "pipeline",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("--force"), "{err}");
    invoke(&[
        "pipeline",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--force",
    ])
    .unwrap();
}

#[test]
fn analyze_writes_artifacts_and_fails_cleanly_on_missing_input() {
    let root = tempfile::tempdir().unwrap();
    let audios = write_noise_wavs(root.path(), &["probe"], 2.0);
    let out = root.path().join("analysis");
    invoke(&[
        "analyze",
        audios[0].to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--window-len",
        "2048",
        "--hop",
        "128",
        "--fft-len",
        "2048",
        "--alpha-max",
        "80",
    ])
    .unwrap();
    for name in [
        "spectrogram.csv",
        "spectrogram.pgm",
        "scd.csv",
        "scd.pgm",
        "ccf.csv",
        "ccf.pgm",
        "profiles.csv",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }

    let err = invoke(&[
        "analyze",
        root.path().join("missing.wav").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("missing.wav"), "{err}");
}

#[test]
fn features_command_emits_parseable_csv() {
    let root = tempfile::tempdir().unwrap();
    let audios = write_noise_wavs(root.path(), &["clip1"], 2.0);
    let csv = root.path().join("features.csv");
    invoke(&[
        "features",
        audios[0].to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--window-len",
        "2048",
        "--hop",
        "128",
        "--fft-len",
        "2048",
        "--alpha-max",
        "80",
    ])
    .unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("clip,phi1,phi2,phi3,phi4,phi5,phi6,phi7,phi8\n"));
    let rows = cyclospec::survey::parse_features_csv(&text).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].0, "clip1");
    assert!(rows[0].1.phi8 > 0.0);
}

#[test]
fn regress_command_round_trips_synthetic_survey() {
    let root = tempfile::tempdir().unwrap();
    // two clips with made-up features
    let features_text = "clip,phi1,phi2,phi3,phi4,phi5,phi6,phi7,phi8\n\
         clip_a,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8\n\
         clip_b,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1\n";
    let features_path = root.path().join("features.csv");
    fs::write(&features_path, features_text).unwrap();
    // deterministic small survey: 6 participants x 2 clips
    let mut survey_text = String::from(cyclospec::survey::SURVEY_CSV_HEADER);
    survey_text.push('\n');
    for p in 0..6 {
        for clip in ["clip_a", "clip_b"] {
            let base = 1 + (p + clip.len()) % 3;
            survey_text.push_str(&format!(
                "p{p},{clip},{b},{b},{b},{c},{c},{c},{b},{c},{b},{c},{g}\n",
                b = base,
                c = 1 + (base + 1) % 5,
                g = p % 3,
            ));
        }
    }
    let survey_path = root.path().join("survey.csv");
    fs::write(&survey_path, survey_text).unwrap();
    let out = root.path().join("report.txt");
    // with only 2 distinct clips the 8 features are collinear; the command
    // must surface the singular-design error, not panic
    let err = invoke(&[
        "regress",
        "--survey",
        survey_path.to_str().unwrap(),
        "--features",
        features_path.to_str().unwrap(),
        "--response",
        "relaxed",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap_err();
    assert!(
        err.to_string().contains("linearly dependent"),
        "unexpected error: {err}"
    );
}
