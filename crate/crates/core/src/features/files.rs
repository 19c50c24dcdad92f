use std::collections::BTreeMap;
use std::path::Path;

use super::{FeatureError, FeatureVector, ViewPair};
use crate::io::{read_jsonl, read_to_string, write_jsonl};

fn file_error(path: &Path, line: usize, message: impl Into<String>) -> FeatureError {
    FeatureError::File { path: path.display().to_string(), line, message: message.into() }
}

/// `video_id<TAB>text` lines. Blank lines are skipped.
pub fn read_transcripts(path: &Path) -> Result<BTreeMap<String, String>, FeatureError> {
    let contents = read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').ok_or_else(|| file_error(path, i + 1, "expected video_id<TAB>text"))?;
        if out.insert(id.trim().to_string(), text.to_string()).is_some() {
            return Err(file_error(path, i + 1, format!("duplicate video id {id:?}")));
        }
    }
    Ok(out)
}

/// Dense per-video embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatures {
    pub dimension: usize,
    pub vectors: BTreeMap<String, FeatureVector>,
}

/// First non-comment line `dimension <n>`, then `video_id v1 .. vn` rows
/// separated by tabs or spaces.
pub fn read_visual_features(path: &Path) -> Result<VisualFeatures, FeatureError> {
    let contents = read_to_string(path)?;
    let mut dimension: Option<usize> = None;
    let mut vectors = BTreeMap::new();
    for (i, line) in contents.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let first = fields.next().unwrap_or_default();
        let Some(dim) = dimension else {
            if first != "dimension" {
                return Err(file_error(path, line_no, "expected header `dimension <n>`"));
            }
            let n =
                fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| file_error(path, line_no, "bad dimension"))?;
            dimension = Some(n);
            continue;
        };
        let values: Vec<f64> = fields
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| file_error(path, line_no, e.to_string()))?;
        if values.len() != dim {
            return Err(file_error(path, line_no, format!("expected {dim} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(file_error(path, line_no, "non-finite value"));
        }
        if vectors.insert(first.to_string(), FeatureVector::from_dense(&values)).is_some() {
            return Err(file_error(path, line_no, format!("duplicate video id {first:?}")));
        }
    }
    let dimension = dimension.ok_or_else(|| file_error(path, 0, "missing dimension header"))?;
    Ok(VisualFeatures { dimension, vectors })
}

pub fn write_views(path: &Path, views: &[ViewPair]) -> Result<(), FeatureError> {
    Ok(write_jsonl(path, views)?)
}

pub fn read_views(path: &Path) -> Result<Vec<ViewPair>, FeatureError> {
    Ok(read_jsonl(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcripts_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        std::fs::write(&p, "v1\thello\tthere\n\nv2\tbye\n").unwrap();
        let t = read_transcripts(&p).unwrap();
        assert_eq!(t["v1"], "hello\tthere");
        assert_eq!(t["v2"], "bye");
        std::fs::write(&p, "v1 no tab\n").unwrap();
        assert!(read_transcripts(&p).is_err());
    }

    #[test]
    fn visual_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        std::fs::write(&p, "# embeddings\ndimension 3\nv1\t0.5\t0\t-1\nv2 1 2 3\n").unwrap();
        let v = read_visual_features(&p).unwrap();
        assert_eq!(v.dimension, 3);
        assert_eq!(v.vectors["v1"].to_dense(), vec![0.5, 0.0, -1.0]);
        std::fs::write(&p, "dimension 2\nv1 1\n").unwrap();
        assert!(read_visual_features(&p).is_err());
        std::fs::write(&p, "v1 1 2\n").unwrap();
        assert!(read_visual_features(&p).is_err());
    }
}
