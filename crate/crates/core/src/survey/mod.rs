//! Survey scoring, effect-level binning, mixed-model regression of
//! perception scores on the acoustic features, and report rendering.

mod linalg;
mod lmm;

pub use lmm::{erfc, fit_lmm, FitCriterion, LmmFit, RandomSpec, N_FIXED};

use std::collections::BTreeMap;
use std::fmt;

use crate::cyclostationary::FeatureVector;
use crate::error::{Error, Result};

/// The ten reported emotions, in survey order.
pub const EMOTION_NAMES: [&str; 10] = [
    "nervous",
    "irritable",
    "upset",
    "delighted",
    "excited",
    "inspired",
    "attentive",
    "concentrating",
    "sleepy",
    "relaxed",
];

/// One participant-clip rating row: ten 5-point emotion scores plus the
/// 3-point general-experience answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyObservation {
    pub participant_id: String,
    pub clip_id: String,
    pub emotions: [u8; 10],
    pub general_experience: u8,
}

impl SurveyObservation {
    pub fn validate(&self) -> Result<()> {
        for (name, &v) in EMOTION_NAMES.iter().zip(&self.emotions) {
            if !(1..=5).contains(&v) {
                return Err(Error::Config(format!(
                    "emotion '{name}' = {v}, must lie in 1..=5"
                )));
            }
        }
        if self.general_experience > 2 {
            return Err(Error::Config(format!(
                "general_experience = {}, must lie in 0..=2",
                self.general_experience
            )));
        }
        Ok(())
    }
}

/// The 5D perception vector: four emotion composites plus the general
/// experience answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionScores {
    pub negative: f64,
    pub positive: f64,
    pub attentive: f64,
    pub relaxed: f64,
    pub general: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResponseVector {
    Negative,
    Positive,
    Attentive,
    Relaxed,
    General,
}

pub const RESPONSE_VECTORS: [ResponseVector; 5] = [
    ResponseVector::Negative,
    ResponseVector::Positive,
    ResponseVector::Attentive,
    ResponseVector::Relaxed,
    ResponseVector::General,
];

impl ResponseVector {
    pub fn name(&self) -> &'static str {
        match self {
            ResponseVector::Negative => "Negative",
            ResponseVector::Positive => "Positive",
            ResponseVector::Attentive => "Attentive",
            ResponseVector::Relaxed => "Relaxed",
            ResponseVector::General => "General experience",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "negative" => Ok(ResponseVector::Negative),
            "positive" => Ok(ResponseVector::Positive),
            "attentive" => Ok(ResponseVector::Attentive),
            "relaxed" => Ok(ResponseVector::Relaxed),
            "general" | "general_experience" => Ok(ResponseVector::General),
            other => Err(Error::Config(format!(
                "unknown response vector '{other}' (expected negative, positive, attentive, relaxed, or general)"
            ))),
        }
    }
}

impl fmt::Display for ResponseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Composite the ten emotions into the 5D perception vector: negative is
/// the mean of emotions 1-3, positive of 4-6, attentive of 7-8, relaxed of
/// 9-10; general experience passes through.
pub fn score_observation(obs: &SurveyObservation) -> Result<PerceptionScores> {
    obs.validate()?;
    let mean = |range: std::ops::Range<usize>| {
        let slice = &obs.emotions[range];
        slice.iter().map(|&v| v as f64).sum::<f64>() / slice.len() as f64
    };
    Ok(PerceptionScores {
        negative: mean(0..3),
        positive: mean(3..6),
        attentive: mean(6..8),
        relaxed: mean(8..10),
        general: obs.general_experience,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectLevel {
    SubtleOrNone,
    Moderate,
    Strong,
}

impl EffectLevel {
    pub fn name(&self) -> &'static str {
        match self {
            EffectLevel::SubtleOrNone => "subtle or none",
            EffectLevel::Moderate => "moderate",
            EffectLevel::Strong => "strong",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            EffectLevel::SubtleOrNone => 0,
            EffectLevel::Moderate => 1,
            EffectLevel::Strong => 2,
        }
    }
}

/// Tri-level binning of a perception score. Composites: [0,2) subtle or
/// none, [2,3) moderate, [3,5] strong. General experience: 0 / 1 / 2.
pub fn effect_level(score: f64, vector: ResponseVector) -> EffectLevel {
    match vector {
        ResponseVector::General => {
            if score < 0.5 {
                EffectLevel::SubtleOrNone
            } else if score < 1.5 {
                EffectLevel::Moderate
            } else {
                EffectLevel::Strong
            }
        }
        _ => {
            if score < 2.0 {
                EffectLevel::SubtleOrNone
            } else if score < 3.0 {
                EffectLevel::Moderate
            } else {
                EffectLevel::Strong
            }
        }
    }
}

fn vector_value(scores: &PerceptionScores, vector: ResponseVector) -> f64 {
    match vector {
        ResponseVector::Negative => scores.negative,
        ResponseVector::Positive => scores.positive,
        ResponseVector::Attentive => scores.attentive,
        ResponseVector::Relaxed => scores.relaxed,
        ResponseVector::General => scores.general as f64,
    }
}

/// Per-genre mean scores and effect-level fractions over the five vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSummary {
    pub genre: String,
    pub n: usize,
    /// Means in RESPONSE_VECTORS order.
    pub means: [f64; 5],
    /// level_fractions[vector][level] in EffectLevel::index order.
    pub level_fractions: [[f64; 3]; 5],
}

/// Group observations by clip genre and summarize each group.
pub fn summarize_effects(scores: &[(String, PerceptionScores)]) -> Vec<EffectSummary> {
    let mut groups: BTreeMap<&str, Vec<&PerceptionScores>> = BTreeMap::new();
    for (genre, s) in scores {
        groups.entry(genre.as_str()).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(genre, rows)| {
            let n = rows.len();
            let mut means = [0.0f64; 5];
            let mut level_fractions = [[0.0f64; 3]; 5];
            for s in &rows {
                for (vi, vector) in RESPONSE_VECTORS.iter().enumerate() {
                    let v = vector_value(s, *vector);
                    means[vi] += v;
                    level_fractions[vi][effect_level(v, *vector).index()] += 1.0;
                }
            }
            for vi in 0..5 {
                means[vi] /= n as f64;
                for li in 0..3 {
                    level_fractions[vi][li] /= n as f64;
                }
            }
            EffectSummary {
                genre: genre.to_string(),
                n,
                means,
                level_fractions,
            }
        })
        .collect()
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

/// Render a fitted model as the two-row coefficients/p-value table, one
/// column per feature.
pub fn render_fit_report(title: &str, fit: &LmmFit) -> String {
    let mut out = String::new();
    let header: Vec<String> = (1..=8).map(|j| format!("phi{j}")).collect();
    out.push_str(&format!("{title:<18}"));
    for h in &header {
        out.push_str(&format!("{h:>12}"));
    }
    out.push('\n');
    out.push_str(&format!("{:<18}", "Coefficients bi"));
    for j in 1..=8 {
        out.push_str(&format!("{:>12.3}", fit.beta[j]));
    }
    out.push('\n');
    out.push_str(&format!("{:<18}", "P-value"));
    for j in 1..=8 {
        out.push_str(&format!("{:>12}", fmt_p(fit.p_values[j])));
    }
    out.push('\n');
    out.push_str(&format!(
        "Intercept b0 {:.3} (se {:.3}); residual var {:.4}; random-effect var {}; logLik {:.3}; n={} groups={}{}\n",
        fit.beta[0],
        fit.std_err[0],
        fit.residual_variance,
        fit.random_effect_variances
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(","),
        fit.log_likelihood,
        fit.n_obs,
        fit.n_groups,
        if fit.converged { "" } else { " (NOT CONVERGED)" },
    ));
    out
}

/// Render per-genre summaries with the columns of the overall-scores table.
pub fn render_summary_table(summaries: &[EffectSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16}{:>10}{:>10}{:>10}{:>10}{:>20}\n",
        "Audio Genre", "Negative", "Positive", "Attentive", "Relaxed", "General experience"
    ));
    for s in summaries {
        out.push_str(&format!(
            "{:<16}{:>10.4}{:>10.4}{:>10.4}{:>10.4}{:>20.4}\n",
            s.genre, s.means[0], s.means[1], s.means[2], s.means[3], s.means[4]
        ));
    }
    out.push('\n');
    out.push_str("Effect-level fractions (subtle or none / moderate / strong):\n");
    for s in summaries {
        out.push_str(&format!("{:<16}", s.genre));
        for (vi, vector) in RESPONSE_VECTORS.iter().enumerate() {
            out.push_str(&format!(
                " {}: {:.2}/{:.2}/{:.2}",
                vector.name(),
                s.level_fractions[vi][0],
                s.level_fractions[vi][1],
                s.level_fractions[vi][2]
            ));
        }
        out.push('\n');
    }
    out
}

pub const SURVEY_CSV_HEADER: &str =
    "participant_id,clip_id,nervous,irritable,upset,delighted,excited,inspired,attentive,concentrating,sleepy,relaxed,general";

/// Parse the survey CSV (one row per participant-clip pair).
pub fn parse_survey_csv(text: &str) -> Result<Vec<SurveyObservation>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Config("empty survey csv".into()))?;
    if header.trim() != SURVEY_CSV_HEADER {
        return Err(Error::Config(format!(
            "survey csv header mismatch: expected '{SURVEY_CSV_HEADER}', got '{header}'"
        )));
    }
    let mut observations = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 13 {
            return Err(Error::Config(format!(
                "survey csv line {}: expected 13 fields, got {}",
                lineno + 1,
                parts.len()
            )));
        }
        let mut emotions = [0u8; 10];
        for (k, slot) in emotions.iter_mut().enumerate() {
            *slot = parts[2 + k].trim().parse().map_err(|_| {
                Error::Config(format!(
                    "survey csv line {}: bad {} value '{}'",
                    lineno + 1,
                    EMOTION_NAMES[k],
                    parts[2 + k]
                ))
            })?;
        }
        let obs = SurveyObservation {
            participant_id: parts[0].trim().to_string(),
            clip_id: parts[1].trim().to_string(),
            emotions,
            general_experience: parts[12].trim().parse().map_err(|_| {
                Error::Config(format!(
                    "survey csv line {}: bad general value '{}'",
                    lineno + 1,
                    parts[12]
                ))
            })?,
        };
        obs.validate()
            .map_err(|e| Error::Config(format!("survey csv line {}: {e}", lineno + 1)))?;
        observations.push(obs);
    }
    Ok(observations)
}

pub const FEATURES_CSV_HEADER: &str = "clip,phi1,phi2,phi3,phi4,phi5,phi6,phi7,phi8";

/// Render feature rows in the layout written by the `features` command.
pub fn render_features_csv(rows: &[(String, FeatureVector)]) -> String {
    let mut out = String::from(FEATURES_CSV_HEADER);
    out.push('\n');
    for (clip, f) in rows {
        out.push_str(clip);
        for v in f.as_array() {
            out.push_str(&format!(",{v:.9e}"));
        }
        out.push('\n');
    }
    out
}

/// Parse the output of the `features` command.
pub fn parse_features_csv(text: &str) -> Result<Vec<(String, FeatureVector)>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Config("empty features csv".into()))?;
    if header.trim() != FEATURES_CSV_HEADER {
        return Err(Error::Config(format!(
            "features csv header mismatch: expected '{FEATURES_CSV_HEADER}', got '{header}'"
        )));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(Error::Config(format!(
                "features csv line {}: expected 9 fields, got {}",
                lineno + 1,
                parts.len()
            )));
        }
        let mut vals = [0.0f64; 8];
        for (k, slot) in vals.iter_mut().enumerate() {
            *slot = parts[1 + k].trim().parse().map_err(|_| {
                Error::Config(format!(
                    "features csv line {}: bad phi{} value '{}'",
                    lineno + 1,
                    k + 1,
                    parts[1 + k]
                ))
            })?;
        }
        rows.push((
            parts[0].trim().to_string(),
            FeatureVector {
                phi1: vals[0],
                phi2: vals[1],
                phi3: vals[2],
                phi4: vals[3],
                phi5: vals[4],
                phi6: vals[5],
                phi7: vals[6],
                phi8: vals[7],
            },
        ));
    }
    Ok(rows)
}

/// Join survey observations with clip features into mixed-model rows.
pub fn join_rows(
    observations: &[SurveyObservation],
    features: &[(String, FeatureVector)],
) -> Result<Vec<(PerceptionScores, FeatureVector, String)>> {
    let by_clip: BTreeMap<&str, &FeatureVector> =
        features.iter().map(|(c, f)| (c.as_str(), f)).collect();
    let mut rows = Vec::with_capacity(observations.len());
    for obs in observations {
        let f = by_clip.get(obs.clip_id.as_str()).ok_or_else(|| {
            Error::Config(format!(
                "no feature row for clip '{}' rated by '{}'",
                obs.clip_id, obs.participant_id
            ))
        })?;
        rows.push((score_observation(obs)?, **f, obs.participant_id.clone()));
    }
    Ok(rows)
}
