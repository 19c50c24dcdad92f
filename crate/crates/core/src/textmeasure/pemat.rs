use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MeasureError;
use crate::io::FormatError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PematResponse {
    Agree,
    Disagree,
    Na,
}

impl FromStr for PematResponse {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "agree" | "1" => Ok(PematResponse::Agree),
            "disagree" | "0" => Ok(PematResponse::Disagree),
            "na" | "n/a" => Ok(PematResponse::Na),
            other => Err(format!("unknown PEMAT response {other:?}")),
        }
    }
}

/// Responses to the understandability criteria for one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PematRubric {
    items: Vec<(String, PematResponse)>,
}

impl PematRubric {
    pub fn new(items: Vec<(String, PematResponse)>) -> Result<Self, MeasureError> {
        if items.is_empty() {
            return Err(MeasureError::EmptyRubric);
        }
        let mut seen = HashSet::with_capacity(items.len());
        for (id, _) in &items {
            if !seen.insert(id.as_str()) {
                return Err(MeasureError::DuplicateCriterion(id.clone()));
            }
        }
        Ok(PematRubric { items })
    }

    pub fn items(&self) -> &[(String, PematResponse)] {
        &self.items
    }

    /// Agree count over non-NA count.
    pub fn score(&self) -> Result<f64, MeasureError> {
        let agree = self.items.iter().filter(|(_, r)| *r == PematResponse::Agree).count();
        let rated = self.items.iter().filter(|(_, r)| *r != PematResponse::Na).count();
        if rated == 0 {
            return Err(MeasureError::UndefinedScore);
        }
        Ok(agree as f64 / rated as f64)
    }
}

/// Reads `video_id,criterion_id,response` rows (with header) into one rubric
/// per video.
pub fn read_rubrics(path: &Path) -> Result<BTreeMap<String, PematRubric>, MeasureError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FormatError::parse(path, 0, e.to_string()))?;
    let mut grouped: BTreeMap<String, Vec<(String, PematResponse)>> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| MeasureError::Rubric { line, message: e.to_string() })?;
        if row.len() != 3 {
            return Err(MeasureError::Rubric { line, message: format!("expected 3 fields, got {}", row.len()) });
        }
        let response: PematResponse = row[2].parse().map_err(|message| MeasureError::Rubric { line, message })?;
        grouped.entry(row[0].to_string()).or_default().push((row[1].to_string(), response));
    }
    grouped.into_iter().map(|(id, items)| PematRubric::new(items).map(|r| (id, r))).collect()
}

/// Score of a rubric.
pub fn pemat_score(rubric: &PematRubric) -> Result<f64, MeasureError> {
    rubric.score()
}
