use super::{gaussian_blur, jpeg_noise, NormalizedImage, PreprocessError};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Parameters of the training-time degradation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradationConfig {
    pub apply_probability: f64,
    pub blur_sigma_min: f64,
    pub blur_sigma_max: f64,
    pub jpeg_quality_min: i64,
    pub jpeg_quality_max: i64,
    /// Base seed; the pipeline derives a per-image stream from it.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            apply_probability: 0.5,
            blur_sigma_min: 0.5,
            blur_sigma_max: 3.0,
            jpeg_quality_min: 40,
            jpeg_quality_max: 95,
            seed: 0,
        }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |msg: &str| Err(PreprocessError::InvalidConfig(msg.to_string()));
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return bad("apply_probability must be in [0, 1]");
        }
        if !(self.blur_sigma_min > 0.0 && self.blur_sigma_min <= self.blur_sigma_max && self.blur_sigma_max.is_finite()) {
            return bad("blur sigma range must satisfy 0 < min <= max");
        }
        if !(1 <= self.jpeg_quality_min && self.jpeg_quality_min <= self.jpeg_quality_max && self.jpeg_quality_max <= 100) {
            return bad("jpeg quality range must satisfy 1 <= min <= max <= 100");
        }
        Ok(())
    }
}

/// Which corruption (if any) a degradation draw selected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegradationBranch {
    None,
    Blur { sigma: f64 },
    Jpeg { quality: i64 },
}

/// Draw order: gate uniform in [0,1), then a fair branch coin, then the
/// branch parameter. The gate is always drawn so streams stay aligned.
fn draw_branch<R: Rng + ?Sized>(cfg: &DegradationConfig, rng: &mut R) -> DegradationBranch {
    let gate: f64 = rng.gen();
    if gate >= cfg.apply_probability {
        return DegradationBranch::None;
    }
    if rng.gen_bool(0.5) {
        DegradationBranch::Blur { sigma: rng.gen_range(cfg.blur_sigma_min..=cfg.blur_sigma_max) }
    } else {
        DegradationBranch::Jpeg { quality: rng.gen_range(cfg.jpeg_quality_min..=cfg.jpeg_quality_max) }
    }
}

/// With probability `apply_probability` applies either a Gaussian blur or
/// simulated JPEG noise (chosen uniformly); otherwise returns the input.
pub fn apply_degradation<R: Rng + ?Sized>(
    img: &NormalizedImage,
    cfg: &DegradationConfig,
    rng: &mut R,
) -> Result<(NormalizedImage, DegradationBranch), PreprocessError> {
    cfg.validate()?;
    let branch = draw_branch(cfg, rng);
    let out = match branch {
        DegradationBranch::None => img.clone(),
        DegradationBranch::Blur { sigma } => gaussian_blur(img, sigma)?,
        DegradationBranch::Jpeg { quality } => jpeg_noise(img, quality)?,
    };
    Ok((out, branch))
}
