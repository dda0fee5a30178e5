//! Pipeline configuration file (TOML, strict keys) and the config hash that
//! binds checkpoints to a feature-extraction setup.

use crate::preprocess::{DegradationConfig, STANDARD_SIZE};
use crate::semantic::EncoderConfig;
use crate::spectral::ReductionMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Seed used when neither the config file nor `--seed` sets one.
pub const DEFAULT_SEED: u64 = 42;

/// Overrides `encoder.model_path`.
pub const MODEL_PATH_ENV: &str = "FUSE_MODEL_PATH";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub reduction_mode: ReductionMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { reduction_mode: ReductionMode::AxisProfiles }
    }
}

/// Two-stage schedule and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub batch_size: usize,
    pub replay_fraction: f64,
    pub learning_rate: f64,
    pub hidden_units: usize,
    /// Fraction of a stage's training list held out for validation loss when
    /// the manifest has no `val` records for that stage.
    pub val_fraction: f64,
    /// Skip degradation and compute features once. Faster, but training then
    /// never sees degraded images.
    pub feature_cache: bool,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            stage1_epochs: 4,
            stage2_epochs: 3,
            batch_size: 64,
            replay_fraction: 0.05,
            learning_rate: 1e-4,
            hidden_units: crate::classifier::DEFAULT_HIDDEN,
            val_fraction: 0.05,
            feature_cache: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub features: FeatureConfig,
    pub degradation: DegradationConfig,
    pub training: StageConfig,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            encoder: EncoderConfig::default(),
            features: FeatureConfig::default(),
            degradation: DegradationConfig { seed: DEFAULT_SEED, ..Default::default() },
            training: StageConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: Self = toml::from_str(text)?;
        cfg.degradation.seed = cfg.seed;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        fix(&mut self.paths.manifest);
        fix(&mut self.paths.test_manifest);
        fix(&mut self.paths.output_dir);
        fix(&mut self.encoder.model_path);
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.degradation.seed = seed;
    }

    /// Applies `FUSE_MODEL_PATH` if set.
    pub fn apply_env(&mut self) {
        if let Some(p) = std::env::var_os(MODEL_PATH_ENV) {
            self.encoder.model_path = Some(PathBuf::from(p));
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.training;
        if t.stage1_epochs == 0 || t.stage2_epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if t.batch_size == 0 {
            return Err(invalid("batch_size must be >= 1"));
        }
        if !(t.replay_fraction > 0.0 && t.replay_fraction <= 1.0) {
            return Err(invalid(format!("replay_fraction must be in (0, 1], got {}", t.replay_fraction)));
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive"));
        }
        if t.hidden_units == 0 {
            return Err(invalid("hidden_units must be >= 1"));
        }
        if !(t.val_fraction > 0.0 && t.val_fraction < 1.0) {
            return Err(invalid("val_fraction must be in (0, 1)"));
        }
        self.degradation.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    /// Canonical text of everything that changes what features a model sees.
    pub fn hash_material(&self) -> String {
        let d = &self.degradation;
        format!(
            "fuse-config/1\n\
             image_size={STANDARD_SIZE}\n\
             resize=bilinear\n\
             spectrum=luma,fft2,shifted,log1p_magnitude,atan2_phase\n\
             reduction_mode={}\n\
             degradation.apply_probability={:?}\n\
             degradation.blur_sigma=[{:?},{:?}]\n\
             degradation.jpeg_quality=[{},{}]\n\
             encoder={}\n",
            self.features.reduction_mode.as_str(),
            d.apply_probability,
            d.blur_sigma_min,
            d.blur_sigma_max,
            d.jpeg_quality_min,
            d.jpeg_quality_max,
            self.encoder.identity(),
        )
    }

    pub fn config_hash(&self) -> [u8; 32] {
        Sha256::digest(self.hash_material().as_bytes()).into()
    }
}
