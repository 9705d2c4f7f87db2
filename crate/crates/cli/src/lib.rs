//! Command-line entry point wiring the analysis, dataset, GAN, synthesis,
//! and regression stages into one workflow.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cyclospec::audio_io;
use cyclospec::config::RunConfig;
use cyclospec::cyclostationary::{self, CyclicSpectrum};
use cyclospec::dataset;
use cyclospec::encode;
use cyclospec::gan::{self, GanModel};
use cyclospec::spectral::{self, StftConfig, TILE_LEN, TILE_SIZE};
use cyclospec::survey;
use cyclospec::synthesis;

pub const ENV_SEED: &str = "CYCLOSPEC_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "cyclospec",
    about = "Cyclostationary audio features, spectrogram-GAN synthesis, and perception regression",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct StftArgs {
    /// Analysis window length in samples.
    #[arg(long, default_value_t = 8820)]
    pub window_len: usize,
    /// Hop between frames in samples.
    #[arg(long, default_value_t = 105)]
    pub hop: usize,
    /// FFT length (>= window length).
    #[arg(long, default_value_t = 8820)]
    pub fft_len: usize,
    /// Largest cyclic frequency (Hz) on the alpha grid.
    #[arg(long, default_value_t = 100.0)]
    pub alpha_max: f64,
}

impl StftArgs {
    fn config(&self) -> Result<StftConfig> {
        Ok(StftConfig::new(self.window_len, self.hop, self.fft_len)?)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Spectrogram, SCD, and CCF artifacts (CSV + PGM) for one clip.
    Analyze {
        /// Input WAV path.
        #[arg(value_name = "INPUT", required_unless_present = "input_flag")]
        input: Option<PathBuf>,
        #[arg(long = "input", value_name = "PATH", conflicts_with = "input")]
        input_flag: Option<PathBuf>,
        /// Output directory for the artifacts.
        #[arg(long, default_value = "analysis")]
        out_dir: PathBuf,
        #[command(flatten)]
        stft: StftArgs,
    },
    /// Extract the eight scalar features into a CSV row.
    Features {
        #[arg(value_name = "INPUT", required_unless_present = "input_flag")]
        input: Option<PathBuf>,
        #[arg(long = "input", value_name = "PATH", conflicts_with = "input")]
        input_flag: Option<PathBuf>,
        /// Output CSV path (header clip,phi1..phi8).
        #[arg(long)]
        csv: PathBuf,
        #[command(flatten)]
        stft: StftArgs,
    },
    /// Emit the |SCD| matrix as CSV and PGM.
    Scd {
        #[arg(value_name = "INPUT", required_unless_present = "input_flag")]
        input: Option<PathBuf>,
        #[arg(long = "input", value_name = "PATH", conflicts_with = "input")]
        input_flag: Option<PathBuf>,
        #[arg(long, default_value = "scd-out")]
        out_dir: PathBuf,
        #[command(flatten)]
        stft: StftArgs,
    },
    /// Corpus operations.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// GAN training and generation.
    #[command(subcommand)]
    Gan(GanCommand),
    /// Synthesize an audio clip from a trained model.
    Synth {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Clip duration in seconds.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the synthesized power spectrogram as a PGM image.
        #[arg(long)]
        dump_spectrogram: Option<PathBuf>,
        /// Griffin-Lim iterations.
        #[arg(long, default_value_t = 100)]
        griffin_lim_iters: usize,
    },
    /// Fit the mixed model of one perception vector on the features.
    Regress {
        #[arg(long)]
        survey: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "positive")]
        response: String,
        /// Random-effect structure: intercept or intercept_plus_slopes.
        #[arg(long, default_value = "intercept")]
        random: String,
        /// Estimation criterion: ml or reml.
        #[arg(long, default_value = "ml")]
        criterion: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-genre score summaries plus fits for all five vectors.
    Report {
        #[arg(long)]
        survey: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Map from clip id prefix to genre, e.g. "synthesized" (clips whose
        /// id starts with the prefix are one genre, the rest the other).
        #[arg(long, default_value = "synthesized")]
        genre_prefix: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// End-to-end run: dataset build, gan train, synth, features, regress.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overwrite an existing run directory.
        #[arg(long)]
        force: bool,
        /// Parallel clip synthesis bound.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Subcommand, Debug)]
pub enum DatasetCommand {
    /// Build the tile corpus and cluster it into training sets.
    Build {
        /// Flat key=value config file (audios, plan, stft, clustering).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "corpus")]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum GanCommand {
    /// Train on a clustered corpus and write the final checkpoint.
    Train {
        /// Corpus directory holding manifest.csv and tile files.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional config file for the training hyperparameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate tiles from a checkpoint.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            input,
            input_flag,
            out_dir,
            stft,
        } => cmd_analyze(&pick_input(input, input_flag)?, &out_dir, &stft),
        Command::Features {
            input,
            input_flag,
            csv,
            stft,
        } => cmd_features(&pick_input(input, input_flag)?, &csv, &stft),
        Command::Scd {
            input,
            input_flag,
            out_dir,
            stft,
        } => cmd_scd(&pick_input(input, input_flag)?, &out_dir, &stft),
        Command::Dataset(DatasetCommand::Build { config, out_dir }) => {
            cmd_dataset_build(&config, &out_dir)
        }
        Command::Gan(GanCommand::Train {
            corpus,
            out,
            config,
        }) => cmd_gan_train(&corpus, &out, config.as_deref()),
        Command::Gan(GanCommand::Generate {
            model,
            n,
            seed,
            out,
        }) => cmd_gan_generate(&model, n, seed, &out),
        Command::Synth {
            model,
            seed,
            duration,
            out,
            dump_spectrogram,
            griffin_lim_iters,
        } => cmd_synth(
            &model,
            seed,
            duration,
            &out,
            dump_spectrogram.as_deref(),
            griffin_lim_iters,
        ),
        Command::Regress {
            survey,
            features,
            response,
            random,
            criterion,
            out,
        } => cmd_regress(&survey, &features, &response, &random, &criterion, &out),
        Command::Report {
            survey,
            features,
            genre_prefix,
            out,
        } => cmd_report(&survey, &features, &genre_prefix, &out),
        Command::Pipeline {
            config,
            out_dir,
            force,
            jobs,
        } => cmd_pipeline(&config, &out_dir, force, jobs),
    }
}

fn pick_input(positional: Option<PathBuf>, flag: Option<PathBuf>) -> Result<PathBuf> {
    positional
        .or(flag)
        .context("an input WAV is required (positional or --input)")
}

fn env_seed() -> Option<String> {
    std::env::var(ENV_SEED).ok()
}

fn load_mono(path: &Path) -> Result<cyclospec::AudioBuffer> {
    let buf = audio_io::load_wav(path)?;
    Ok(audio_io::to_mono(&buf))
}

fn write_cyclic_artifacts(dir: &Path, name: &str, spectrum: &CyclicSpectrum) -> Result<()> {
    let mags = spectrum.magnitude_matrix();
    encode::write_csv_matrix(
        dir.join(format!("{name}.csv")),
        spectrum.n_f(),
        spectrum.n_alpha(),
        &mags,
    )?;
    // log scale for inspection images; the linear dynamic range hides
    // everything but the PSD column
    let log_mags: Vec<f64> = mags.iter().map(|&v| (v + 1e-300).ln()).collect();
    encode::write_pgm(
        dir.join(format!("{name}.pgm")),
        spectrum.n_f(),
        spectrum.n_alpha(),
        &log_mags,
    )?;
    Ok(())
}

fn cmd_analyze(input: &Path, out_dir: &Path, stft_args: &StftArgs) -> Result<()> {
    let mono = load_mono(input)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    // spectrogram at the display configuration: 0.1 s window, 50% overlap
    let fs = mono.sample_rate() as usize;
    let win = (fs / 10).max(16);
    let display_cfg = StftConfig::new(win, win / 2, win.next_power_of_two())?;
    let spec = spectral::power(&spectral::stft(&mono, &display_cfg)?);
    let log_spec: Vec<f64> = spec.data().iter().map(|&v| (v + 1e-300).ln()).collect();
    encode::write_csv_matrix(
        out_dir.join("spectrogram.csv"),
        spec.n_bins(),
        spec.n_frames(),
        spec.data(),
    )?;
    encode::write_pgm(
        out_dir.join("spectrogram.pgm"),
        spec.n_bins(),
        spec.n_frames(),
        &log_spec,
    )?;

    let cfg = stft_args.config()?;
    let scd = cyclostationary::estimate_scd(&mono, &cfg, stft_args.alpha_max)?;
    write_cyclic_artifacts(out_dir, "scd", &scd)?;
    let ccf = cyclostationary::ccf(&scd)?;
    write_cyclic_artifacts(out_dir, "ccf", &ccf)?;

    let profile = cyclostationary::cyclic_profiles(&scd);
    let mut rows = Vec::with_capacity(profile.alpha_grid.len() * 3);
    rows.extend_from_slice(&profile.alpha_grid);
    rows.extend_from_slice(&profile.mean_profile);
    rows.extend_from_slice(&profile.max_profile);
    encode::write_csv_matrix(
        out_dir.join("profiles.csv"),
        3,
        profile.alpha_grid.len(),
        &rows,
    )?;
    println!(
        "analyze: wrote spectrogram, scd, ccf, profiles for {} to {}",
        input.display(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_features(input: &Path, csv: &Path, stft_args: &StftArgs) -> Result<()> {
    let mono = load_mono(input)?;
    let cfg = stft_args.config()?;
    let features = cyclostationary::extract_features(&mono, &cfg, stft_args.alpha_max)?;
    let clip = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".into());
    let text = survey::render_features_csv(&[(clip, features)]);
    fs::write(csv, text).with_context(|| format!("writing {}", csv.display()))?;
    println!("features: wrote {}", csv.display());
    Ok(())
}

fn cmd_scd(input: &Path, out_dir: &Path, stft_args: &StftArgs) -> Result<()> {
    let mono = load_mono(input)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let cfg = stft_args.config()?;
    let scd = cyclostationary::estimate_scd(&mono, &cfg, stft_args.alpha_max)?;
    write_cyclic_artifacts(out_dir, "scd", &scd)?;
    println!("scd: wrote matrix to {}", out_dir.display());
    Ok(())
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.apply_env_seed(env_seed().as_deref())?;
    Ok(cfg)
}

fn cmd_dataset_build(config: &Path, out_dir: &Path) -> Result<()> {
    let cfg = read_config(config)?;
    if cfg.audios.is_empty() {
        bail!("config must list input WAVs under the 'audios' key");
    }
    let stft_cfg = cfg.tile_stft()?;
    let plan = cfg.segment_plan();
    let mut manifest = dataset::build_corpus_to_dir(
        &cfg.audios,
        &plan,
        &stft_cfg,
        cfg.tiles_per_segment,
        cfg.seed,
        out_dir,
    )?;
    let mixes = dataset::cluster_manifest(&mut manifest, cfg.n_sets, cfg.w_major, cfg.seed)?;
    dataset::write_manifest(&manifest, out_dir)?;
    println!(
        "dataset build: {} tiles in {} sets under {}",
        manifest.records.len(),
        mixes.len(),
        out_dir.display()
    );
    for (k, mix) in mixes.iter().enumerate() {
        let desc = mix
            .iter()
            .map(|(l, p)| format!("{l}={p:.3}"))
            .collect::<Vec<_>>()
            .join(" ");
        println!("  set {:2}: {desc}", k + 1);
    }
    Ok(())
}

fn cmd_gan_train(corpus: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = match config {
        Some(path) => read_config(path)?,
        None => {
            let mut c = RunConfig::default();
            c.apply_env_seed(env_seed().as_deref())?;
            c
        }
    };
    let gan_cfg = cfg.gan_config();
    let store = dataset::TileStore::open(corpus)?;
    let mut set_ids: Vec<usize> = store
        .manifest
        .records
        .iter()
        .map(|r| r.set_id)
        .filter(|&s| s > 0)
        .collect();
    set_ids.sort_unstable();
    set_ids.dedup();
    if set_ids.is_empty() {
        bail!("corpus manifest has no set assignments; run dataset build first");
    }
    let mut model: GanModel<f32> = gan::init_model(&gan_cfg)?;
    let ckpt_dir = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let history = gan::train_with_loader(
        &mut model,
        &gan_cfg,
        set_ids.len(),
        |i| load_training_set_core(&store, set_ids[i]),
        |iter, m| {
            let path = ckpt_dir.join(format!("checkpoint_{iter:06}.ckpt"));
            gan::save_checkpoint(m, &gan_cfg, &path)
        },
    )?;
    gan::save_checkpoint(&model, &gan_cfg, out)?;
    let last = history.last().expect("nonempty history");
    println!(
        "gan train: {} iterations, final disc loss {:.4}, gen loss {:.4}, model at {}",
        history.len(),
        last.disc_loss,
        last.gen_loss,
        out.display()
    );
    Ok(())
}

fn cmd_gan_generate(model_path: &Path, n: usize, seed: u64, out: &Path) -> Result<()> {
    let (model, _cfg) = gan::load_checkpoint(model_path)?;
    let tiles = gan::generate_batch(&model, n, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (i, tile) in tiles.iter().enumerate() {
        let mut bytes = Vec::with_capacity(TILE_LEN * 4);
        for v in &tile.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(out.join(format!("tile_{i:03}.bin")), &bytes)?;
        // channels stacked vertically for the preview image
        let stacked: Vec<f64> = tile.data.iter().map(|&v| v as f64).collect();
        encode::write_pgm(
            out.join(format!("tile_{i:03}.pgm")),
            3 * TILE_SIZE,
            TILE_SIZE,
            &stacked,
        )?;
    }
    fs::write(
        out.join("meta.txt"),
        format!(
            "epsilon={:.17e}\nmin_log={:.17e}\nmax_log={:.17e}\n",
            tiles[0].meta.log_epsilon, tiles[0].meta.min_log, tiles[0].meta.max_log
        ),
    )?;
    println!("gan generate: wrote {n} tiles to {}", out.display());
    Ok(())
}

fn cmd_synth(
    model_path: &Path,
    seed: u64,
    duration: f64,
    out: &Path,
    dump_spectrogram: Option<&Path>,
    griffin_lim_iters: usize,
) -> Result<()> {
    let (model, _) = gan::load_checkpoint(model_path)?;
    let stft_cfg = StftConfig::tile_default();
    let syn_cfg = synthesis::SynthesisConfig {
        clip_duration_s: duration,
        griffin_lim_iters,
        ..synthesis::SynthesisConfig::default()
    };
    let (audio, spec) =
        synthesis::synthesize_clip_with_spectrogram(&model, &stft_cfg, &syn_cfg, seed)?;
    audio_io::save_wav(&audio, out)?;
    if let Some(pgm) = dump_spectrogram {
        let log_spec: Vec<f64> = spec.data().iter().map(|&v| (v + 1e-300).ln()).collect();
        encode::write_pgm(pgm, spec.n_bins(), spec.n_frames(), &log_spec)?;
    }
    println!(
        "synth: {:.2} s clip at {}",
        audio.duration_s(),
        out.display()
    );
    Ok(())
}

fn parse_random(s: &str) -> Result<survey::RandomSpec> {
    match s {
        "intercept" => Ok(survey::RandomSpec::Intercept),
        "intercept_plus_slopes" => Ok(survey::RandomSpec::InterceptPlusSlopes),
        other => bail!("--random must be intercept or intercept_plus_slopes, got '{other}'"),
    }
}

fn parse_criterion(s: &str) -> Result<survey::FitCriterion> {
    match s {
        "ml" => Ok(survey::FitCriterion::Ml),
        "reml" => Ok(survey::FitCriterion::Reml),
        other => bail!("--criterion must be ml or reml, got '{other}'"),
    }
}

fn cmd_regress(
    survey_path: &Path,
    features_path: &Path,
    response: &str,
    random: &str,
    criterion: &str,
    out: &Path,
) -> Result<()> {
    let observations = survey::parse_survey_csv(&fs::read_to_string(survey_path)?)?;
    let features = survey::parse_features_csv(&fs::read_to_string(features_path)?)?;
    let rows = survey::join_rows(&observations, &features)?;
    let response = survey::ResponseVector::parse(response)?;
    let fit = survey::fit_lmm(&rows, response, parse_random(random)?, parse_criterion(criterion)?)?;
    let report = survey::render_fit_report(response.name(), &fit);
    fs::write(out, &report).with_context(|| format!("writing {}", out.display()))?;
    print!("{report}");
    Ok(())
}

fn cmd_report(
    survey_path: &Path,
    features_path: &Path,
    genre_prefix: &str,
    out: &Path,
) -> Result<()> {
    let observations = survey::parse_survey_csv(&fs::read_to_string(survey_path)?)?;
    let features = survey::parse_features_csv(&fs::read_to_string(features_path)?)?;
    let rows = survey::join_rows(&observations, &features)?;
    let genre_scores: Vec<(String, survey::PerceptionScores)> = observations
        .iter()
        .zip(&rows)
        .map(|(obs, (scores, _, _))| {
            let genre = if obs.clip_id.starts_with(genre_prefix) {
                genre_prefix.to_string()
            } else {
                "recorded".to_string()
            };
            (genre, *scores)
        })
        .collect();
    let mut text = survey::render_summary_table(&survey::summarize_effects(&genre_scores));
    text.push('\n');
    for vector in survey::RESPONSE_VECTORS {
        match survey::fit_lmm(
            &rows,
            vector,
            survey::RandomSpec::Intercept,
            survey::FitCriterion::Ml,
        ) {
            Ok(fit) => text.push_str(&survey::render_fit_report(vector.name(), &fit)),
            Err(e) => text.push_str(&format!("{}: fit failed: {e}\n", vector.name())),
        }
        text.push('\n');
    }
    fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    println!("report: wrote {}", out.display());
    Ok(())
}

const PIPELINE_MANIFEST: &str = "manifest.txt";

struct Stage<'a>(&'a str);

impl Stage<'_> {
    fn wrap<T>(&self, r: Result<T>) -> Result<T> {
        r.with_context(|| format!("pipeline stage '{}'", self.0))
    }
}

fn cmd_pipeline(config_path: &Path, out_dir: &Path, force: bool, jobs: usize) -> Result<()> {
    let cfg = read_config(config_path)?;
    let hash = cfg.config_hash();
    let manifest_path = out_dir.join(PIPELINE_MANIFEST);
    if manifest_path.exists() {
        let previous = fs::read_to_string(&manifest_path)?;
        let same = previous
            .lines()
            .any(|l| l == format!("config_hash={hash}"));
        if !force {
            if same {
                bail!(
                    "run with config hash {hash} already exists in {}; use --force to overwrite",
                    out_dir.display()
                );
            }
            bail!(
                "{} holds a run with a different config hash; use --force to overwrite",
                out_dir.display()
            );
        }
    }
    fs::create_dir_all(out_dir)?;
    if cfg.audios.is_empty() {
        bail!("config must list input WAVs under the 'audios' key");
    }

    // dataset
    let stage = Stage("dataset build");
    let corpus_dir = out_dir.join("corpus");
    let stft_cfg = stage.wrap(cfg.tile_stft().map_err(Into::into))?;
    let plan = cfg.segment_plan();
    let mut manifest = stage.wrap(
        dataset::build_corpus_to_dir(
            &cfg.audios,
            &plan,
            &stft_cfg,
            cfg.tiles_per_segment,
            cfg.seed,
            &corpus_dir,
        )
        .map_err(Into::into),
    )?;
    stage.wrap(
        dataset::cluster_manifest(&mut manifest, cfg.n_sets, cfg.w_major, cfg.seed)
            .map(|_| ())
            .map_err(Into::into),
    )?;
    stage.wrap(dataset::write_manifest(&manifest, &corpus_dir).map_err(Into::into))?;

    // gan train
    let stage = Stage("gan train");
    let gan_cfg = cfg.gan_config();
    let store = stage.wrap(dataset::TileStore::open(&corpus_dir).map_err(Into::into))?;
    let ckpt_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let mut model: GanModel<f32> = stage.wrap(gan::init_model(&gan_cfg).map_err(Into::into))?;
    stage.wrap(
        gan::train_with_loader(
            &mut model,
            &gan_cfg,
            cfg.n_sets,
            |i| load_training_set_core(&store, i + 1),
            |iter, m| {
                gan::save_checkpoint(m, &gan_cfg, ckpt_dir.join(format!("checkpoint_{iter:06}.ckpt")))
            },
        )
        .map(|_| ())
        .map_err(Into::into),
    )?;
    let model_path = out_dir.join("model.ckpt");
    stage.wrap(gan::save_checkpoint(&model, &gan_cfg, &model_path).map_err(Into::into))?;

    // synth
    let stage = Stage("synth");
    let clips_dir = out_dir.join("clips");
    fs::create_dir_all(&clips_dir)?;
    let syn_cfg = cfg.synthesis_config();
    let clip_jobs: Vec<(usize, u64)> = (0..cfg.n_clips)
        .map(|i| (i, cfg.seed.wrapping_add(1 + i as u64)))
        .collect();
    let mut clip_paths = vec![PathBuf::new(); cfg.n_clips];
    let results: Vec<Result<(usize, PathBuf)>> = run_bounded(jobs.max(1), &clip_jobs, |&(i, clip_seed)| {
        let clip = synthesis::synthesize_clip(&model, &stft_cfg, &syn_cfg, clip_seed)?;
        let path = clips_dir.join(format!("clip_{:02}.wav", i + 1));
        audio_io::save_wav(&clip, &path)?;
        Ok((i, path))
    });
    for r in results {
        let (i, path) = stage.wrap(r)?;
        clip_paths[i] = path;
    }

    // features
    let stage = Stage("features");
    let feature_cfg = stage.wrap(cfg.feature_stft().map_err(Into::into))?;
    let mut feature_rows = Vec::with_capacity(cfg.n_clips);
    for path in &clip_paths {
        let mono = stage.wrap(load_mono(path))?;
        let f = stage.wrap(
            cyclostationary::extract_features(&mono, &feature_cfg, cfg.alpha_max)
                .map_err(Into::into),
        )?;
        let clip = path.file_stem().unwrap().to_string_lossy().into_owned();
        feature_rows.push((clip, f));
    }
    let features_path = out_dir.join("features.csv");
    stage.wrap(
        fs::write(&features_path, survey::render_features_csv(&feature_rows)).map_err(Into::into),
    )?;

    // optional regression
    let mut report_path = None;
    if let Some(survey_file) = &cfg.survey {
        let stage = Stage("regress");
        let path = out_dir.join("report.txt");
        stage.wrap(cmd_report_from_parts(
            survey_file,
            &features_path,
            &path,
            cfg.response,
            cfg.random,
            cfg.criterion,
        ))?;
        report_path = Some(path);
    }

    // manifest: config hash, seeds, checkpoint, output paths (relative,
    // fixed order, no timestamps so reruns are byte-identical)
    let mut manifest_text = String::new();
    manifest_text.push_str(&format!("config_hash={hash}\n"));
    manifest_text.push_str(&format!("seed={}\n", cfg.seed));
    manifest_text.push_str("corpus=corpus/manifest.csv\n");
    manifest_text.push_str("checkpoint=model.ckpt\n");
    for (i, _) in clip_paths.iter().enumerate() {
        manifest_text.push_str(&format!("clip={}\n", format_args!("clips/clip_{:02}.wav", i + 1)));
    }
    manifest_text.push_str("features=features.csv\n");
    if report_path.is_some() {
        manifest_text.push_str("report=report.txt\n");
    }
    fs::write(&manifest_path, manifest_text)?;
    println!(
        "pipeline: complete; {} clips, manifest at {}",
        cfg.n_clips,
        manifest_path.display()
    );
    Ok(())
}

fn load_training_set_core(store: &dataset::TileStore, set_id: usize) -> cyclospec::Result<dataset::TrainingSet> {
    let records: Vec<&dataset::TileRecord> = store
        .manifest
        .records
        .iter()
        .filter(|r| r.set_id == set_id)
        .collect();
    if records.is_empty() {
        return Err(cyclospec::Error::Manifest(format!(
            "no tiles assigned to set {set_id}"
        )));
    }
    let mut tiles = Vec::with_capacity(records.len());
    let mut mix: std::collections::BTreeMap<String, f64> = std::collections::BTreeMap::new();
    for r in &records {
        tiles.push(store.read_tile(r)?);
        *mix.entry(r.label.clone()).or_insert(0.0) += 1.0;
    }
    let n = tiles.len() as f64;
    for v in mix.values_mut() {
        *v /= n;
    }
    Ok(dataset::TrainingSet {
        set_id,
        tiles,
        source_mix: mix,
    })
}

fn cmd_report_from_parts(
    survey_path: &Path,
    features_path: &Path,
    out: &Path,
    response: survey::ResponseVector,
    random: survey::RandomSpec,
    criterion: survey::FitCriterion,
) -> Result<()> {
    let observations = survey::parse_survey_csv(&fs::read_to_string(survey_path)?)?;
    let features = survey::parse_features_csv(&fs::read_to_string(features_path)?)?;
    let rows = survey::join_rows(&observations, &features)?;
    let fit = survey::fit_lmm(&rows, response, random, criterion)?;
    fs::write(out, survey::render_fit_report(response.name(), &fit))?;
    Ok(())
}

/// Run jobs with at most `bound` worker threads, preserving input order in
/// the returned results.
fn run_bounded<I: Sync, O: Send>(
    bound: usize,
    items: &[I],
    f: impl Fn(&I) -> Result<O> + Sync,
) -> Vec<Result<O>> {
    if bound <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let mut results: Vec<Option<Result<O>>> = (0..items.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<&mut Option<Result<O>>>> =
        results.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..bound.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(&items[i]);
                **slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    results.into_iter().map(|r| r.expect("job completed")).collect()
}
