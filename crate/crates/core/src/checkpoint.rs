//! Binary checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "FUSE"  u16 version  [u8; 32] config hash
//! u32 len + UTF-8 TOML of the pipeline config
//! u32 dim, f32 mean[dim], f32 std[dim]                 (normalizer)
//! u32 block count, then per block:
//!     u8 name len + name, u32 rows, u32 cols, f32 data[rows*cols]
//! ```
//!
//! Blocks are `w1` (hidden × input), `b1` (hidden × 1), `w2` (1 × hidden),
//! `b2` (1 × 1).

use crate::classifier::MlpParams;
use crate::config::PipelineConfig;
use crate::fusion::FusionNormalizer;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"FUSE";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported checkpoint version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u16 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint was produced with a different feature configuration (hash {stored} != live {live})")]
    ConfigHashMismatch { stored: String, live: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub normalizer: FusionNormalizer,
    pub config: PipelineConfig,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn put_f32s(out: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn put_block(out: &mut Vec<u8>, name: &str, rows: usize, cols: usize, data: &[f64]) {
    debug_assert_eq!(rows * cols, data.len());
    out.push(name.len() as u8);
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    put_f32s(out, data.iter().copied());
}

impl Checkpoint {
    /// Run-local paths are dropped from the stored config so the same
    /// training run writes identical bytes wherever its outputs go.
    pub fn new(params: MlpParams, normalizer: FusionNormalizer, config: &PipelineConfig) -> Self {
        let config = PipelineConfig { paths: Default::default(), ..config.clone() };
        Self { params, normalizer, config }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let (d, h) = (p.input_dim(), p.hidden());
        let mut out = Vec::with_capacity(64 + 4 * (p.as_slice().len() + 2 * self.normalizer.dim()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.config_hash());
        let cfg = PipelineConfig { paths: Default::default(), ..self.config.clone() }.to_toml_string();
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&(self.normalizer.dim() as u32).to_le_bytes());
        put_f32s(&mut out, self.normalizer.mean.iter().copied());
        put_f32s(&mut out, self.normalizer.std.iter().copied());
        out.extend_from_slice(&4u32.to_le_bytes());
        put_block(&mut out, "w1", h, d, p.w1());
        put_block(&mut out, "b1", h, 1, p.b1());
        put_block(&mut out, "w2", 1, h, p.w2());
        put_block(&mut out, "b2", 1, 1, &[p.b2()]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch { found: version });
        }
        let stored_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let cfg_len = r.u32()? as usize;
        let cfg_text = std::str::from_utf8(r.take(cfg_len)?).map_err(|_| corrupt("config is not UTF-8"))?;
        let config = PipelineConfig::from_toml_str(cfg_text).map_err(|e| corrupt(&format!("embedded config: {e}")))?;
        if config.config_hash() != stored_hash {
            return Err(corrupt("embedded config does not match stored hash"));
        }
        let dim = r.u32()? as usize;
        let mean = r.f32s(dim)?;
        let std = r.f32s(dim)?;
        let normalizer = FusionNormalizer { mean, std };

        if r.u32()? != 4 {
            return Err(corrupt("expected 4 parameter blocks"));
        }
        let mut blocks = Vec::with_capacity(4);
        for want in ["w1", "b1", "w2", "b2"] {
            let name_len = r.u8()? as usize;
            let name = r.take(name_len)?;
            if name != want.as_bytes() {
                return Err(corrupt(&format!("expected block {want}")));
            }
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows.checked_mul(cols).ok_or_else(|| corrupt("block too large"))?;
            blocks.push((rows, cols, r.f32s(n)?));
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        let (hidden, input_dim) = (blocks[0].0, blocks[0].1);
        let shapes_ok = (blocks[1].0, blocks[1].1) == (hidden, 1)
            && (blocks[2].0, blocks[2].1) == (1, hidden)
            && (blocks[3].0, blocks[3].1) == (1, 1);
        if !shapes_ok {
            return Err(corrupt("inconsistent block shapes"));
        }
        let theta: Vec<f64> = blocks.into_iter().flat_map(|(_, _, v)| v).collect();
        let params = MlpParams::from_flat(input_dim, hidden, theta).map_err(|e| corrupt(&e.to_string()))?;
        if !params.is_finite() || normalizer.mean.iter().chain(&normalizer.std).any(|v| !v.is_finite()) {
            return Err(corrupt("non-finite values"));
        }
        Ok(Self { params, normalizer, config })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Loads and checks that the checkpoint's feature configuration matches
    /// the live one.
    pub fn load_for(path: &Path, live: &PipelineConfig) -> Result<Self, CheckpointError> {
        let ckpt = Self::load(path)?;
        ckpt.check_config(live)?;
        Ok(ckpt)
    }

    pub fn check_config(&self, live: &PipelineConfig) -> Result<(), CheckpointError> {
        let (stored, live) = (self.config.config_hash(), live.config_hash());
        if stored != live {
            return Err(CheckpointError::ConfigHashMismatch { stored: hex(&stored), live: hex(&live) });
        }
        Ok(())
    }
}

fn corrupt(msg: &str) -> CheckpointError {
    CheckpointError::CorruptCheckpoint(msg.to_string())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let len = n.checked_mul(4).ok_or_else(|| corrupt("block too large"))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ReductionMode;

    fn sample() -> Checkpoint {
        let mut params = MlpParams::init(12, 5, 3);
        params.set_b2(0.125);
        params.round_to_f32();
        let normalizer = FusionNormalizer {
            mean: (0..7).map(|i| f64::from(i as f32 * 0.3)).collect(),
            std: (0..7).map(|i| f64::from(1.0 + i as f32)).collect(),
        };
        Checkpoint { params, normalizer, config: PipelineConfig::default() }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.params.as_slice().iter().zip(c.params.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(&bytes[..4], b"FUSE");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), FORMAT_VERSION);
    }

    #[test]
    fn truncation_is_corrupt() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 10, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(CheckpointError::CorruptCheckpoint(_))), "cut {cut}");
        }
    }

    #[test]
    fn version_checked() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::VersionMismatch { found: 9 })));
    }

    #[test]
    fn tampered_hash_is_corrupt() {
        let mut bytes = sample().to_bytes();
        bytes[10] ^= 0xff;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::CorruptCheckpoint(_))));
    }

    #[test]
    fn live_config_guard() {
        let c = sample();
        let mut live = c.config.clone();
        c.check_config(&live).unwrap();
        live.paths.output_dir = Some("elsewhere".into());
        c.check_config(&live).unwrap();
        live.features.reduction_mode = ReductionMode::ScalarStats;
        assert!(matches!(c.check_config(&live), Err(CheckpointError::ConfigHashMismatch { .. })));
    }
}
