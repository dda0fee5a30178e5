//! Detector for AI-generated images that fuses FFT spectral statistics with
//! CLIP image embeddings and trains a small MLP head in two stages.
//!
//! Data flow per image: decode → [`preprocess::standardize`] → (training
//! only) [`preprocess::apply_degradation`] → [`spectral::extract_spectral`]
//! and [`semantic::EncoderHandle::encode`] → [`fusion::fuse`] →
//! [`classifier::forward`].

pub mod checkpoint;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod evaluation;
pub mod fusion;
pub mod manifest;
pub mod pipeline;
pub mod preprocess;
pub mod semantic;
pub mod spectral;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{ConfigError, PipelineConfig};
pub use pipeline::{run_training, PipelineError, TrainOutcome, TrainReport};
