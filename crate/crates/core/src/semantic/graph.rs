use super::{SemanticEmbedding, SemanticError, EMBEDDING_DIM};
use crate::preprocess::STANDARD_SIZE;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use tract_onnx::prelude::*;
use tract_onnx::tract_hir::infer::Factoid;

pub const INPUT_NAME: &str = "pixel_values";
pub const OUTPUT_NAME: &str = "image_embeds";

type Plan = Arc<TypedRunnableModel>;

/// ONNX vision tower run in-process. The plan is immutable; each call spawns
/// its own execution state, so concurrent `encode` calls are safe.
pub struct GraphEncoder {
    path: PathBuf,
    plan: Plan,
}

fn mismatch(msg: impl Into<String>) -> SemanticError {
    SemanticError::SignatureMismatch(msg.into())
}

/// Rejects graphs whose declared input contradicts 1×3×224×224 float32.
/// Symbolic dimensions (e.g. a named batch axis) are accepted.
fn check_declared_input(fact: &InferenceFact) -> Result<(), SemanticError> {
    if let Some(dt) = fact.datum_type.concretize() {
        if dt != f32::datum_type() {
            return Err(mismatch(format!("input must be float32, graph declares {dt:?}")));
        }
    }
    let want = [1, 3, STANDARD_SIZE, STANDARD_SIZE];
    let dims: Vec<_> = fact.shape.dims().collect();
    if !fact.shape.is_open() && dims.len() != want.len() {
        return Err(mismatch(format!("input must have rank 4, graph declares rank {}", dims.len())));
    }
    for (i, (d, &w)) in dims.iter().zip(&want).enumerate() {
        if let Some(Ok(n)) = d.concretize().map(|d| d.to_i64()) {
            if n != w as i64 {
                return Err(mismatch(format!("input dim {i} is {n}, expected {w}")));
            }
        }
    }
    Ok(())
}

impl GraphEncoder {
    pub fn load(path: &Path) -> Result<Self, SemanticError> {
        let model = tract_onnx::onnx()
            .model_for_path(path)
            .map_err(|e| SemanticError::RuntimeFailure(format!("{}: {e}", path.display())))?;
        Self::from_inference_model(path.to_path_buf(), model)
    }

    fn from_inference_model(path: PathBuf, model: InferenceModel) -> Result<Self, SemanticError> {
        let inputs = model.input_outlets().map_err(|e| mismatch(e.to_string()))?;
        let outputs = model.output_outlets().map_err(|e| mismatch(e.to_string()))?;
        if inputs.len() != 1 || outputs.len() != 1 {
            return Err(mismatch(format!("expected 1 input and 1 output, found {} and {}", inputs.len(), outputs.len())));
        }
        let in_name = &model.node(inputs[0].node).name;
        if in_name != INPUT_NAME {
            return Err(mismatch(format!("input is named {in_name:?}, expected {INPUT_NAME:?}")));
        }
        let out_name = model.outlet_label(outputs[0]).unwrap_or(&model.node(outputs[0].node).name);
        if out_name != OUTPUT_NAME {
            return Err(mismatch(format!("output is named {out_name:?}, expected {OUTPUT_NAME:?}")));
        }
        let s = STANDARD_SIZE;
        check_declared_input(model.input_fact(0).map_err(|e| mismatch(e.to_string()))?)?;
        let typed = model
            .with_input_fact(0, f32::fact([1, 3, s, s]).into())
            .and_then(|m| m.into_optimized())
            .map_err(|e| mismatch(format!("graph does not accept 1x3x{s}x{s} float32: {e}")))?;
        let out_fact = typed.output_fact(0).map_err(|e| mismatch(e.to_string()))?;
        let shape: Option<Vec<usize>> = out_fact.shape.as_concrete().map(|d| d.to_vec());
        if out_fact.datum_type != f32::datum_type() || shape.as_deref() != Some(&[1, EMBEDDING_DIM][..]) {
            return Err(mismatch(format!(
                "output must be float32 1x{EMBEDDING_DIM}, graph yields {:?} {:?}",
                out_fact.datum_type, out_fact.shape
            )));
        }
        let plan = typed.into_runnable().map_err(|e| SemanticError::RuntimeFailure(e.to_string()))?;
        Ok(Self { path, plan })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Runs the graph on a channel-first, CLIP-normalized tensor.
    pub fn encode(&self, chw: &[f32]) -> Result<SemanticEmbedding, SemanticError> {
        let s = STANDARD_SIZE;
        let input = tract_ndarray::Array4::from_shape_vec((1, 3, s, s), chw.to_vec())
            .map_err(|e| SemanticError::RuntimeFailure(e.to_string()))?;
        let out = self
            .plan
            .run(tvec!(Tensor::from(input).into()))
            .map_err(|e| SemanticError::RuntimeFailure(e.to_string()))?;
        let view = out[0].to_plain_array_view::<f32>().map_err(|e| SemanticError::RuntimeFailure(e.to_string()))?;
        SemanticEmbedding::new(view.iter().copied().collect())
    }
}
