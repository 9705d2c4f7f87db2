//! Flat key=value run configuration.
//!
//! One file drives the whole pipeline. Unknown keys are rejected, every key
//! has a default, and the canonical serialization (sorted keys, normalized
//! values) is what gets hashed, so formatting and comments never change a
//! run's identity.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::dataset::{SegmentPlan, Selection};
use crate::encode;
use crate::error::{Error, Result};
use crate::gan::GanConfig;
use crate::spectral::StftConfig;
use crate::survey::{FitCriterion, RandomSpec, ResponseVector};
use crate::synthesis::SynthesisConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Input WAV paths, semicolon separated in the file.
    pub audios: Vec<PathBuf>,

    // segmenting
    pub segment_len: usize,
    pub segments_per_audio: usize,
    pub selection: Selection,

    // tile STFT
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub tiles_per_segment: usize,

    // feature extraction
    pub feature_window_len: usize,
    pub feature_hop: usize,
    pub feature_fft_len: usize,
    pub alpha_max: f64,

    // clustering
    pub n_sets: usize,
    pub w_major: f64,

    // gan
    pub latent_dim: usize,
    pub base_channels: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub iterations_per_set: usize,
    pub checkpoint_every: usize,

    // synthesis
    pub n_clips: usize,
    pub clip_duration_s: f64,
    pub time_smooth_frames: usize,
    pub freq_smooth_bins: usize,
    pub noise_floor_rel: f64,
    pub griffin_lim_iters: usize,
    pub griffin_lim_momentum: f64,
    pub sample_rate: u32,

    // regression
    pub survey: Option<PathBuf>,
    pub response: ResponseVector,
    pub random: RandomSpec,
    pub criterion: FitCriterion,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            audios: Vec::new(),
            segment_len: 32_400,
            segments_per_audio: 1_600,
            selection: Selection::SequentialWrap,
            window_len: 2_048,
            hop: 512,
            fft_len: 2_048,
            tiles_per_segment: 30,
            feature_window_len: 8_820,
            feature_hop: 105,
            feature_fft_len: 8_820,
            alpha_max: 100.0,
            n_sets: 12,
            w_major: 0.55,
            latent_dim: 100,
            base_channels: 64,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 64,
            epochs: 6,
            iterations_per_set: 1_500,
            checkpoint_every: 250,
            n_clips: 12,
            clip_duration_s: 10.0,
            time_smooth_frames: 5,
            freq_smooth_bins: 7,
            noise_floor_rel: 1e-4,
            griffin_lim_iters: 100,
            griffin_lim_momentum: 0.9,
            sample_rate: 22_050,
            survey: None,
            response: ResponseVector::Positive,
            random: RandomSpec::Intercept,
            criterion: FitCriterion::Ml,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}'")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "audios" => {
                self.audios = value
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| PathBuf::from(s.trim()))
                    .collect()
            }
            "segment_len" => self.segment_len = parse_num(key, value)?,
            "segments_per_audio" => self.segments_per_audio = parse_num(key, value)?,
            "selection" => {
                self.selection = match value {
                    "sequential_wrap" => Selection::SequentialWrap,
                    "random" => Selection::Random,
                    other => {
                        return Err(Error::Config(format!(
                            "selection must be sequential_wrap or random, got '{other}'"
                        )))
                    }
                }
            }
            "window_len" => self.window_len = parse_num(key, value)?,
            "hop" => self.hop = parse_num(key, value)?,
            "fft_len" => self.fft_len = parse_num(key, value)?,
            "tiles_per_segment" => self.tiles_per_segment = parse_num(key, value)?,
            "feature_window_len" => self.feature_window_len = parse_num(key, value)?,
            "feature_hop" => self.feature_hop = parse_num(key, value)?,
            "feature_fft_len" => self.feature_fft_len = parse_num(key, value)?,
            "alpha_max" => self.alpha_max = parse_num(key, value)?,
            "n_sets" => self.n_sets = parse_num(key, value)?,
            "w_major" => self.w_major = parse_num(key, value)?,
            "latent_dim" => self.latent_dim = parse_num(key, value)?,
            "base_channels" => self.base_channels = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "iterations_per_set" => self.iterations_per_set = parse_num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, value)?,
            "n_clips" => self.n_clips = parse_num(key, value)?,
            "clip_duration_s" => self.clip_duration_s = parse_num(key, value)?,
            "time_smooth_frames" => self.time_smooth_frames = parse_num(key, value)?,
            "freq_smooth_bins" => self.freq_smooth_bins = parse_num(key, value)?,
            "noise_floor_rel" => self.noise_floor_rel = parse_num(key, value)?,
            "griffin_lim_iters" => self.griffin_lim_iters = parse_num(key, value)?,
            "griffin_lim_momentum" => self.griffin_lim_momentum = parse_num(key, value)?,
            "sample_rate" => self.sample_rate = parse_num(key, value)?,
            "survey" => {
                self.survey = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "response" => self.response = ResponseVector::parse(value)?,
            "random" => {
                self.random = match value {
                    "intercept" => RandomSpec::Intercept,
                    "intercept_plus_slopes" => RandomSpec::InterceptPlusSlopes,
                    other => {
                        return Err(Error::Config(format!(
                            "random must be intercept or intercept_plus_slopes, got '{other}'"
                        )))
                    }
                }
            }
            "criterion" => {
                self.criterion = match value {
                    "ml" => FitCriterion::Ml,
                    "reml" => FitCriterion::Reml,
                    other => {
                        return Err(Error::Config(format!(
                            "criterion must be ml or reml, got '{other}'"
                        )))
                    }
                }
            }
            unknown => return Err(Error::Config(format!("unknown config key '{unknown}'"))),
        }
        Ok(())
    }

    /// `CYCLOSPEC_SEED`, when set, overrides the config seed.
    pub fn apply_env_seed(&mut self, env_value: Option<&str>) -> Result<()> {
        if let Some(v) = env_value {
            self.seed = v.trim().parse().map_err(|_| {
                Error::Config(format!("CYCLOSPEC_SEED: cannot parse '{v}' as an integer"))
            })?;
        }
        Ok(())
    }

    /// Canonical serialization: sorted keys, normalized value formatting.
    pub fn to_canonical_string(&self) -> String {
        let audios = self
            .audios
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(";");
        let mut pairs: Vec<(&str, String)> = vec![
            ("alpha_max", format!("{:?}", self.alpha_max)),
            ("audios", audios),
            ("base_channels", self.base_channels.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("beta1", format!("{:?}", self.beta1)),
            ("beta2", format!("{:?}", self.beta2)),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("clip_duration_s", format!("{:?}", self.clip_duration_s)),
            (
                "criterion",
                match self.criterion {
                    FitCriterion::Ml => "ml".into(),
                    FitCriterion::Reml => "reml".into(),
                },
            ),
            ("epochs", self.epochs.to_string()),
            ("feature_fft_len", self.feature_fft_len.to_string()),
            ("feature_hop", self.feature_hop.to_string()),
            ("feature_window_len", self.feature_window_len.to_string()),
            ("fft_len", self.fft_len.to_string()),
            ("freq_smooth_bins", self.freq_smooth_bins.to_string()),
            ("griffin_lim_iters", self.griffin_lim_iters.to_string()),
            (
                "griffin_lim_momentum",
                format!("{:?}", self.griffin_lim_momentum),
            ),
            ("hop", self.hop.to_string()),
            ("iterations_per_set", self.iterations_per_set.to_string()),
            ("latent_dim", self.latent_dim.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("n_clips", self.n_clips.to_string()),
            ("n_sets", self.n_sets.to_string()),
            ("noise_floor_rel", format!("{:?}", self.noise_floor_rel)),
            (
                "random",
                match self.random {
                    RandomSpec::Intercept => "intercept".into(),
                    RandomSpec::InterceptPlusSlopes => "intercept_plus_slopes".into(),
                },
            ),
            (
                "response",
                match self.response {
                    ResponseVector::Negative => "negative".into(),
                    ResponseVector::Positive => "positive".into(),
                    ResponseVector::Attentive => "attentive".into(),
                    ResponseVector::Relaxed => "relaxed".into(),
                    ResponseVector::General => "general".into(),
                },
            ),
            ("sample_rate", self.sample_rate.to_string()),
            ("seed", self.seed.to_string()),
            ("segment_len", self.segment_len.to_string()),
            ("segments_per_audio", self.segments_per_audio.to_string()),
            (
                "selection",
                match self.selection {
                    Selection::SequentialWrap => "sequential_wrap".into(),
                    Selection::Random => "random".into(),
                },
            ),
            (
                "survey",
                self.survey
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("tiles_per_segment", self.tiles_per_segment.to_string()),
            ("time_smooth_frames", self.time_smooth_frames.to_string()),
            ("w_major", format!("{:?}", self.w_major)),
            ("window_len", self.window_len.to_string()),
        ];
        pairs.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn config_hash(&self) -> String {
        encode::sha256_hex(self.to_canonical_string().as_bytes())
    }

    pub fn tile_stft(&self) -> Result<StftConfig> {
        StftConfig::new(self.window_len, self.hop, self.fft_len)
    }

    pub fn feature_stft(&self) -> Result<StftConfig> {
        StftConfig::new(
            self.feature_window_len,
            self.feature_hop,
            self.feature_fft_len,
        )
    }

    pub fn segment_plan(&self) -> SegmentPlan {
        SegmentPlan {
            segment_len: self.segment_len,
            segments_per_audio: self.segments_per_audio,
            selection: self.selection,
            seed: self.seed,
        }
    }

    pub fn gan_config(&self) -> GanConfig {
        GanConfig {
            latent_dim: self.latent_dim,
            base_channels: self.base_channels,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            batch_size: self.batch_size,
            epochs: self.epochs,
            iterations_per_set: self.iterations_per_set,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        SynthesisConfig {
            clip_duration_s: self.clip_duration_s,
            time_smooth_frames: self.time_smooth_frames,
            freq_smooth_bins: self.freq_smooth_bins,
            noise_floor_rel: self.noise_floor_rel,
            griffin_lim_iters: self.griffin_lim_iters,
            griffin_lim_momentum: self.griffin_lim_momentum,
            sample_rate: self.sample_rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_canonical_form() {
        let cfg = RunConfig::default();
        let text = cfg.to_canonical_string();
        let parsed = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, parsed);
        assert_eq!(cfg.config_hash(), parsed.config_hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("nonsense_key=1\n").unwrap_err();
        assert!(err.to_string().contains("nonsense_key"));
    }

    #[test]
    fn comments_and_formatting_do_not_change_the_hash() {
        let a = RunConfig::parse("seed=5\nlatent_dim=32\n").unwrap();
        let b = RunConfig::parse("# a comment\n  latent_dim = 32 \n\nseed = 5\n").unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        let c = RunConfig::parse("seed=6\nlatent_dim=32\n").unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn env_seed_override() {
        let mut cfg = RunConfig::parse("seed=5\n").unwrap();
        cfg.apply_env_seed(Some("99")).unwrap();
        assert_eq!(cfg.seed, 99);
        assert!(cfg.apply_env_seed(Some("abc")).is_err());
        cfg.apply_env_seed(None).unwrap();
        assert_eq!(cfg.seed, 99);
    }

    #[test]
    fn audio_list_parsing() {
        let cfg = RunConfig::parse("audios=a.wav; b.wav ;c.wav\n").unwrap();
        assert_eq!(
            cfg.audios,
            vec![
                PathBuf::from("a.wav"),
                PathBuf::from("b.wav"),
                PathBuf::from("c.wav")
            ]
        );
    }

    #[test]
    fn every_canonical_key_is_parseable() {
        // the canonical serialization must only emit known keys
        let cfg = RunConfig {
            audios: vec![PathBuf::from("x.wav")],
            survey: Some(PathBuf::from("s.csv")),
            ..RunConfig::default()
        };
        let text = cfg.to_canonical_string();
        let parsed = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, parsed);
    }
}
