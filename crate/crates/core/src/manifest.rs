//! JSONL dataset manifests: one `{path, label, generator, split, stage}`
//! object per line.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("missing field `{field}` at line {line}")]
    MissingField { line: usize, field: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// 1 for fake (the positive class), 0 for real.
    pub fn target(self) -> f64 {
        match self {
            Self::Real => 0.0,
            Self::Fake => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Real => "real",
            Self::Fake => "fake",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Stage2,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Self::Stage1 => 1,
            Self::Stage2 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(rename = "path")]
    pub image_path: PathBuf,
    pub label: Label,
    pub generator: String,
    pub split: Split,
    pub stage: Stage,
}

impl ManifestRecord {
    /// Identifier used in feature exports: the path as written.
    pub fn id(&self) -> String {
        self.image_path.to_string_lossy().into_owned()
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, serde_json::Value>, name: &'static str, line: usize) -> Result<&'a str, ManifestError> {
    match obj.get(name) {
        None | Some(serde_json::Value::Null) => Err(ManifestError::MissingField { line, field: name }),
        Some(serde_json::Value::String(s)) => Ok(s),
        Some(other) => Err(ManifestError::MalformedRecord { line, reason: format!("`{name}` must be a string, got {other}") }),
    }
}

fn parse_enum<T: for<'de> Deserialize<'de>>(value: &str, name: &str, line: usize) -> Result<T, ManifestError> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| ManifestError::MalformedRecord { line, reason: format!("invalid {name} {value:?}") })
}

/// Parses one manifest line (1-based `line` for diagnostics).
pub fn parse_record(text: &str, line: usize) -> Result<ManifestRecord, ManifestError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ManifestError::MalformedRecord { line, reason: e.to_string() })?;
    let obj = value
        .as_object()
        .ok_or_else(|| ManifestError::MalformedRecord { line, reason: "not a JSON object".into() })?;
    let path = field(obj, "path", line)?;
    let label: Label = parse_enum(field(obj, "label", line)?, "label", line)?;
    let generator = field(obj, "generator", line)?;
    let split = parse_enum(field(obj, "split", line)?, "split", line)?;
    let stage = parse_enum(field(obj, "stage", line)?, "stage", line)?;
    if path.is_empty() {
        return Err(ManifestError::MalformedRecord { line, reason: "empty path".into() });
    }
    if generator.is_empty() {
        return Err(ManifestError::MalformedRecord { line, reason: "empty generator tag".into() });
    }
    Ok(ManifestRecord { image_path: PathBuf::from(path), label, generator: generator.to_string(), split, stage })
}

/// Parses manifest text; blank lines are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, ManifestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(line, i + 1)?;
        if !seen.insert(rec.image_path.clone()) {
            log::warn!("duplicate manifest path {} at line {}", rec.image_path.display(), i + 1);
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads a manifest file, resolving relative image paths against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
    let mut records = parse_manifest(&text)?;
    for rec in &mut records {
        rec.image_path = resolve_image_path(path, rec);
    }
    Ok(records)
}

/// Image location for a record, relative paths taken from the manifest's directory.
pub fn resolve_image_path(manifest: &Path, rec: &ManifestRecord) -> PathBuf {
    if rec.image_path.is_absolute() {
        rec.image_path.clone()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(&rec.image_path)
    }
}

pub fn to_jsonl(records: &[ManifestRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"{"path": "a.png", "label": "real", "generator": "ADM", "split": "train", "stage": "stage1"}
{"path": "b.png", "label": "fake", "generator": "ADM", "split": "test", "stage": "stage2"}
"#;

    #[test]
    fn two_lines() {
        let recs = parse_manifest(TWO).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].label, Label::Fake);
        assert_eq!(recs[1].split, Split::Test);
        assert_eq!(recs[1].stage, Stage::Stage2);
        assert_eq!(parse_manifest(&to_jsonl(&recs)).unwrap(), recs);
    }

    #[test]
    fn bad_label_reports_line() {
        let text = format!("{TWO}{{\"path\": \"c.png\", \"label\": \"genuine\", \"generator\": \"x\", \"split\": \"train\", \"stage\": \"stage1\"}}\n");
        match parse_manifest(&text) {
            Err(ManifestError::MalformedRecord { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("genuine"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field() {
        let text = r#"{"path": "a.png", "label": "real", "split": "train", "stage": "stage1"}"#;
        assert!(matches!(parse_manifest(text), Err(ManifestError::MissingField { line: 1, field: "generator" })));
    }

    #[test]
    fn empty_file_is_valid() {
        assert!(parse_manifest("").unwrap().is_empty());
        assert!(parse_manifest("\n\n").unwrap().is_empty());
    }

    #[test]
    fn duplicates_allowed() {
        let line = TWO.lines().next().unwrap();
        assert_eq!(parse_manifest(&format!("{line}\n{line}\n")).unwrap().len(), 2);
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let rec = parse_record(TWO.lines().next().unwrap(), 1).unwrap();
        assert_eq!(resolve_image_path(Path::new("/data/m.jsonl"), &rec), PathBuf::from("/data/a.png"));
    }
}
