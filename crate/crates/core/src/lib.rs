//! Cyclostationary analysis and synthesis of audio textures.
//!
//! The crate quantifies the cyclic second-order structure of audio clips
//! (spectral correlation density, cyclic coherence, and eight scalar features
//! Φ1–Φ8), builds spectrogram-tile corpora, trains a small deconvolutional
//! GAN on those tiles with its own reverse-mode gradients, reconstructs
//! waveforms from generated spectrograms via Griffin-Lim, and fits linear
//! mixed-effect models relating the features to listener perception scores.
//!
//! Everything is deterministic: all randomness flows from explicit seeds and
//! the internal PRNG is bit-stable across platforms.

pub mod audio_io;
pub mod config;
pub mod cyclostationary;
pub mod dataset;
pub mod encode;
pub mod error;
pub mod gan;
pub(crate) mod par;
pub mod rng;
pub mod spectral;
pub mod survey;
pub mod synthesis;

pub use audio_io::AudioBuffer;
pub use cyclostationary::{CyclicProfile, CyclicSpectrum, FeatureVector};
pub use error::{Error, Result};
pub use spectral::{NormalizationMeta, Spectrogram, StftConfig, Tile};
