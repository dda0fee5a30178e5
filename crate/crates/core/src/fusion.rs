//! Spectral standardization and concatenation with the semantic embedding.

use crate::semantic::SemanticEmbedding;
use crate::spectral::SpectralFeatureVector;
use thiserror::Error;

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("cannot fit normalizer on an empty collection")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Per-dimension z-score statistics for the spectral block.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FusionNormalizer {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Rounds the statistics to f32, the precision they are stored at.
    pub fn to_storage_precision(&self) -> Self {
        let r = |v: &Vec<f64>| v.iter().map(|&x| f64::from(x as f32)).collect();
        let std: Vec<f64> = r(&self.std);
        Self { mean: r(&self.mean), std: std.into_iter().map(|s| s.max(f64::from(STD_FLOOR as f32))).collect() }
    }
}

/// Population mean and standard deviation per dimension (Welford), with the
/// standard deviation floored at `STD_FLOOR`.
pub fn fit_normalizer<'a, I>(features: I) -> Result<FusionNormalizer, FusionError>
where
    I: IntoIterator<Item = &'a SpectralFeatureVector>,
{
    let mut iter = features.into_iter();
    let first = iter.next().ok_or(FusionError::EmptyInput)?;
    let dim = first.len();
    let mut mean = first.values.clone();
    let mut m2 = vec![0.0; dim];
    let mut n = 1.0;
    for f in iter {
        if f.len() != dim {
            return Err(FusionError::DimensionMismatch { expected: dim, got: f.len() });
        }
        n += 1.0;
        for ((mu, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(&f.values) {
            let delta = x - *mu;
            *mu += delta / n;
            *s += delta * (x - *mu);
        }
    }
    let std = m2.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    Ok(FusionNormalizer { mean, std })
}

/// `[(spectral - mean) / std ‖ semantic]`, spectral block first.
pub fn fuse(
    spec: &SpectralFeatureVector,
    sem: &SemanticEmbedding,
    norm: &FusionNormalizer,
) -> Result<Vec<f64>, FusionError> {
    if spec.len() != norm.dim() {
        return Err(FusionError::DimensionMismatch { expected: norm.dim(), got: spec.len() });
    }
    let mut out = Vec::with_capacity(spec.len() + sem.values().len());
    out.extend(spec.values.iter().zip(norm.mean.iter().zip(&norm.std)).map(|(x, (m, s))| (x - m) / s));
    out.extend(sem.values().iter().map(|&v| f64::from(v)));
    Ok(out)
}
