//! Pipeline configuration: a TOML file whose values the command-line flags
//! override. Relative paths in the file resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use vidcurate_core::corpus::Dimension;
use vidcurate_core::cotrain::CoTrainConfig;
use vidcurate_core::fairness::{Attribute, Family, GenderCoding};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub ingest: IngestSection,
    pub measure: MeasureSection,
    pub features: FeaturesSection,
    pub cotrain: CotrainSection,
    pub fairness: FairnessSection,
    pub review: ReviewSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Corpus file; defaults to `<out>/corpus.jsonl`.
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub rubrics: Option<PathBuf>,
    pub visual: Option<PathBuf>,
    /// Search terms, one per line.
    pub terms: Option<PathBuf>,
    /// Directory of per-term result files for offline ingest.
    pub catalog: Option<PathBuf>,
    /// Recorded review decisions replayed by `cotrain run`.
    pub resolver: Option<PathBuf>,
    /// Reference labels for `evaluate`.
    pub gold: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub per_term: usize,
    pub language: String,
    pub ascii_threshold: f64,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection { per_term: 50, language: "en".into(), ascii_threshold: 0.9 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureSection {
    pub threshold_med: f64,
    pub threshold_und: f64,
}

impl Default for MeasureSection {
    fn default() -> Self {
        MeasureSection { threshold_med: 0.05, threshold_und: 0.7 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub min_df: usize,
    pub include_view_count: bool,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection { min_df: 1, include_view_count: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CotrainSection {
    /// Share of each class of the seed labels held out for the stopping
    /// rule's validation metric.
    pub validation_fraction: f64,
    #[serde(rename = "MED")]
    pub med: CoTrainConfig,
    #[serde(rename = "UND")]
    pub und: CoTrainConfig,
}

impl Default for CotrainSection {
    fn default() -> Self {
        CotrainSection { validation_fraction: 0.25, med: CoTrainConfig::default(), und: CoTrainConfig::default() }
    }
}

impl CotrainSection {
    pub fn config(&self, dimension: Dimension, seed: u64) -> CoTrainConfig {
        let base = match dimension {
            Dimension::Med => &self.med,
            Dimension::Und => &self.und,
        };
        CoTrainConfig { target: dimension, seed, ..base.clone() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessSection {
    pub train_fraction: f64,
    /// Empty means 50 log-spaced values below the null-model threshold.
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub alpha: f64,
    pub gender_coding: GenderCoding,
    pub family: Family,
    pub attribute: Attribute,
    pub delta: f64,
    pub top_k: usize,
}

impl Default for FairnessSection {
    fn default() -> Self {
        FairnessSection {
            train_fraction: 0.7,
            lambda_grid: Vec::new(),
            cv_folds: 10,
            alpha: 0.05,
            gender_coding: GenderCoding::default(),
            family: Family::default(),
            attribute: Attribute::default(),
            delta: 0.2,
            top_k: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewSection {
    pub bind: String,
    /// Defaults to `<out>/review`.
    pub state_dir: Option<PathBuf>,
}

impl Default for ReviewSection {
    fn default() -> Self {
        ReviewSection { bind: "127.0.0.1:8080".into(), state_dir: None }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.corpus,
            &mut p.lexicon,
            &mut p.transcripts,
            &mut p.annotations,
            &mut p.rubrics,
            &mut p.visual,
            &mut p.terms,
            &mut p.catalog,
            &mut p.resolver,
            &mut p.gold,
            &mut p.out,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        if let Some(dir) = self.review.state_dir.as_mut() {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
    }

    pub fn out(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn corpus(&self) -> PathBuf {
        self.paths.corpus.clone().unwrap_or_else(|| self.out().join("corpus.jsonl"))
    }

    /// The seed, required by every step that draws random numbers.
    pub fn seed(&self, step: &str) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::usage(format!("{step} needs a seed: pass --seed or set `seed` in the config")))
    }
}

/// A configured path that must exist.
pub fn existing(path: Option<&PathBuf>, what: &str, flag: &str) -> Result<PathBuf, CliError> {
    let path = path.ok_or_else(|| CliError::usage(format!("no {what} given: pass {flag} or set it under [paths]")))?;
    if !path.exists() {
        return Err(CliError::data(format!("{what} {} does not exist", path.display())));
    }
    Ok(path.clone())
}

/// A derived input (an earlier step's output) that must exist.
pub fn produced(path: PathBuf, step: &str) -> Result<PathBuf, CliError> {
    if !path.exists() {
        return Err(CliError::data(format!("{} does not exist; run `vidcurate {step}` first", path.display())));
    }
    Ok(path)
}

impl PipelineConfig {
    /// Where `ingest` writes: always inside the output directory, so a
    /// configured input corpus is never overwritten.
    pub fn corpus_out(&self) -> PathBuf {
        self.out().join("corpus.jsonl")
    }
}
