use super::{EncoderHandle, SemanticEmbedding, SemanticError, EMBEDDING_DIM};
use crate::preprocess::{decode_image, standardize};
use std::path::{Path, PathBuf};

pub const PARITY_CSV: &str = "embeddings.csv";

/// Reference embeddings written by the export tool: a directory of PNGs plus
/// `embeddings.csv` with rows `image,e0,...,e511`.
#[derive(Debug, Clone)]
pub struct ParityFixture {
    pub entries: Vec<(PathBuf, Vec<f32>)>,
}

#[derive(Debug, Clone)]
pub struct ParityResult {
    pub image: PathBuf,
    pub cosine: f64,
}

impl ParityFixture {
    pub fn load(dir: &Path) -> Result<Self, SemanticError> {
        let fx = |m: String| SemanticError::Fixture(m);
        let csv_path = dir.join(PARITY_CSV);
        let mut reader = csv::Reader::from_path(&csv_path).map_err(|e| fx(format!("{}: {e}", csv_path.display())))?;
        let mut entries = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| fx(format!("row {}: {e}", i + 1)))?;
            if row.len() != EMBEDDING_DIM + 1 {
                return Err(fx(format!("row {} has {} columns", i + 1, row.len())));
            }
            let values = row
                .iter()
                .skip(1)
                .map(|v| v.trim().parse::<f32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| fx(format!("row {}: {e}", i + 1)))?;
            let image = dir.join(&row[0]);
            if !image.is_file() {
                return Err(fx(format!("missing fixture image {}", image.display())));
            }
            entries.push((image, values));
        }
        Ok(Self { entries })
    }
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let na: f64 = a.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Encodes every fixture image and reports its cosine similarity to the
/// reference embedding.
pub fn check_parity(handle: &EncoderHandle, fixture: &ParityFixture) -> Result<Vec<ParityResult>, SemanticError> {
    fixture
        .entries
        .iter()
        .map(|(path, reference)| {
            let bytes = std::fs::read(path).map_err(|e| SemanticError::Fixture(format!("{}: {e}", path.display())))?;
            let raw = decode_image(&bytes).map_err(|e| SemanticError::Fixture(format!("{}: {e}", path.display())))?;
            let emb: SemanticEmbedding = handle.encode(&standardize(&raw))?;
            Ok(ParityResult { image: path.clone(), cosine: cosine_similarity(emb.values(), reference) })
        })
        .collect()
}
