//! Semantic embeddings from a frozen image encoder.
//!
//! Two backends sit behind [`EncoderHandle`]: an ONNX vision tower executed
//! in-process (`graph_runtime`) and a deterministic hash-based stub used by
//! tests and the toy pipeline.

#[cfg(feature = "graph-runtime")]
mod graph;
mod parity;
mod stub;

#[cfg(feature = "graph-runtime")]
pub use graph::GraphEncoder;
pub use parity::{check_parity, cosine_similarity, ParityFixture, ParityResult};
pub use stub::StubEncoder;

use crate::preprocess::{NormalizedImage, STANDARD_SIZE};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

pub const EMBEDDING_DIM: usize = 512;

/// Per-channel statistics the CLIP vision tower was trained with.
pub const CLIP_MEAN: [f64; 3] = [0.48145466, 0.4578275, 0.40821073];
pub const CLIP_STD: [f64; 3] = [0.26862954, 0.26130258, 0.27577711];

#[derive(Debug, Error)]
pub enum SemanticError {
    #[error("encoder model not found: {0}")]
    ModelNotFound(PathBuf),
    #[error("encoder graph signature mismatch: {0}")]
    SignatureMismatch(String),
    #[error("encoder runtime failure: {0}")]
    RuntimeFailure(String),
    #[error("backend {0} not compiled into this build")]
    BackendUnavailable(&'static str),
    #[error("parity fixture error: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEmbedding {
    values: Vec<f32>,
}

impl SemanticEmbedding {
    /// Accepts exactly `EMBEDDING_DIM` finite values.
    pub fn new(values: Vec<f32>) -> Result<Self, SemanticError> {
        if values.len() != EMBEDDING_DIM {
            return Err(SemanticError::RuntimeFailure(format!("embedding has {} values", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SemanticError::RuntimeFailure("embedding has non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderBackend {
    GraphRuntime,
    #[default]
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub backend: EncoderBackend,
    pub model_path: Option<PathBuf>,
    pub stub_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { backend: EncoderBackend::Stub, model_path: None, stub_seed: 7 }
    }
}

impl EncoderConfig {
    /// Stable description of the backend that goes into the config hash.
    pub fn identity(&self) -> String {
        match self.backend {
            EncoderBackend::Stub => format!("stub:{}", self.stub_seed),
            EncoderBackend::GraphRuntime => "graph_runtime:clip-vit-b32:image_embeds".to_string(),
        }
    }
}

/// Loaded encoder. Immutable and shareable across threads.
pub enum EncoderHandle {
    Stub(StubEncoder),
    #[cfg(feature = "graph-runtime")]
    GraphRuntime(GraphEncoder),
}

impl std::fmt::Debug for EncoderHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Stub(s) => f.debug_tuple("Stub").field(&s.seed()).finish(),
            #[cfg(feature = "graph-runtime")]
            Self::GraphRuntime(g) => f.debug_tuple("GraphRuntime").field(&g.path()).finish(),
        }
    }
}

pub fn load_encoder(cfg: &EncoderConfig) -> Result<EncoderHandle, SemanticError> {
    match cfg.backend {
        EncoderBackend::Stub => Ok(EncoderHandle::Stub(StubEncoder::new(cfg.stub_seed))),
        EncoderBackend::GraphRuntime => {
            let path = cfg
                .model_path
                .clone()
                .ok_or_else(|| SemanticError::ModelNotFound(PathBuf::from("<unset>")))?;
            if !path.is_file() {
                return Err(SemanticError::ModelNotFound(path));
            }
            #[cfg(feature = "graph-runtime")]
            {
                Ok(EncoderHandle::GraphRuntime(GraphEncoder::load(&path)?))
            }
            #[cfg(not(feature = "graph-runtime"))]
            {
                Err(SemanticError::BackendUnavailable("graph_runtime"))
            }
        }
    }
}

/// CLIP input normalization, channel-first `3×H×W`.
pub fn clip_preprocess(img: &NormalizedImage) -> Vec<f32> {
    let plane = img.width() * img.height();
    let mut out = vec![0.0f32; 3 * plane];
    for (i, px) in img.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = ((f64::from(px[c]) - CLIP_MEAN[c]) / CLIP_STD[c]) as f32;
        }
    }
    out
}

impl EncoderHandle {
    pub fn encode(&self, img: &NormalizedImage) -> Result<SemanticEmbedding, SemanticError> {
        match self {
            Self::Stub(s) => Ok(s.encode(img)),
            #[cfg(feature = "graph-runtime")]
            Self::GraphRuntime(g) => {
                if !img.is_standard() {
                    return Err(SemanticError::RuntimeFailure(format!(
                        "encoder expects {STANDARD_SIZE}x{STANDARD_SIZE}, got {}x{}",
                        img.width(),
                        img.height()
                    )));
                }
                g.encode(&clip_preprocess(img))
            }
        }
    }

    /// Encodes images in parallel; results are in input order.
    pub fn encode_batch(&self, imgs: &[NormalizedImage]) -> Result<Vec<SemanticEmbedding>, SemanticError> {
        imgs.par_iter().map(|img| self.encode(img)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preprocess_zero_at_mean() {
        let img = NormalizedImage::from_fn(2, 2, |_, _, c| CLIP_MEAN[c] as f32);
        let t = clip_preprocess(&img);
        for c in 0..3 {
            for v in &t[c * 4..(c + 1) * 4] {
                assert!(v.abs() < 1e-6, "channel {c}: {v}");
            }
        }
    }

    #[test]
    fn preprocess_all_zero_image() {
        let img = NormalizedImage::constant(3, 2, 0.0).unwrap();
        let t = clip_preprocess(&img);
        for c in 0..3 {
            let want = (-CLIP_MEAN[c] / CLIP_STD[c]) as f32;
            assert!(t[c * 6..(c + 1) * 6].iter().all(|&v| v == want));
        }
    }

    #[test]
    fn preprocess_is_channel_first_and_invertible() {
        let img = NormalizedImage::from_fn(5, 4, |x, y, c| (x * 7 + y * 3 + c * 11) as f32 / 64.0);
        let t = clip_preprocess(&img);
        for y in 0..4 {
            for x in 0..5 {
                for c in 0..3 {
                    let back = f64::from(t[c * 20 + y * 5 + x]) * CLIP_STD[c] + CLIP_MEAN[c];
                    assert!((back - f64::from(img.get(x, y, c))).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn stub_config_needs_no_file() {
        let h = load_encoder(&EncoderConfig { stub_seed: 7, ..Default::default() }).unwrap();
        assert!(matches!(h, EncoderHandle::Stub(_)));
    }

    #[test]
    fn missing_model_file() {
        let cfg = EncoderConfig {
            backend: EncoderBackend::GraphRuntime,
            model_path: Some("/nonexistent/clip.onnx".into()),
            stub_seed: 0,
        };
        assert!(matches!(load_encoder(&cfg), Err(SemanticError::ModelNotFound(_))));
    }

    #[test]
    fn embedding_rejects_partial_vectors() {
        assert!(SemanticEmbedding::new(vec![0.0; 511]).is_err());
        assert!(SemanticEmbedding::new(vec![f32::NAN; 512]).is_err());
        assert!(SemanticEmbedding::new(vec![0.0; 512]).is_ok());
    }
}
