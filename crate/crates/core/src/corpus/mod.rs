//! Video corpus data model: ingestion, deduplication, language filtering and
//! per-stratum summary statistics.

mod catalog;
mod summary;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::io::{read_jsonl, write_jsonl, FormatError};

pub use catalog::{
    parse_iso8601_duration, term_file_name, CatalogClient, CatalogError, FixtureCatalog, LiveCatalog, API_KEY_ENV,
};
pub use summary::{summarize, Stratum, StratumPair, SummaryTable};

/// Largest rank a search result may carry.
pub const MAX_SEARCH_RANK: u32 = 50;

/// Default ASCII ratio above which an untagged record passes as English.
pub const DEFAULT_ASCII_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("per_term must be in 1..={MAX_SEARCH_RANK}, got {0}")]
    InvalidPerTerm(usize),
    #[error("label references unknown video id {0:?}")]
    DanglingLabel(String),
    #[error("conflicting {dimension} labels for video {video_id:?}")]
    ConflictingLabels { video_id: String, dimension: Dimension },
    #[error("invalid record {video_id:?}: {reason}")]
    InvalidRecord { video_id: String, reason: String },
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Definition {
    Sd,
    Hd,
}

/// Where a record appeared in the result list of a search term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRank {
    pub search_term: String,
    pub rank: u32,
}

/// Metadata of one video. Fields not modelled here are kept in `extra` and
/// written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub channel_id: String,
    pub publish_time: DateTime<Utc>,
    pub title: String,
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
    pub duration_seconds: u64,
    pub definition: Definition,
    pub captions_available: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
    pub view_count: u64,
    pub like_count: u64,
    pub dislike_count: u64,
    pub comment_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_rank: Option<SearchRank>,
    /// Channel-level subscriber count, when the source provides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subscriber_count: Option<u64>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl VideoRecord {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid =
            |reason: &str| CorpusError::InvalidRecord { video_id: self.video_id.clone(), reason: reason.to_string() };
        if self.video_id.is_empty() {
            return Err(invalid("empty video_id"));
        }
        if let Some(r) = &self.search_rank {
            if r.rank == 0 || r.rank > MAX_SEARCH_RANK {
                return Err(invalid("search rank outside 1..=50"));
            }
        }
        if let Some(rating) = self.rating {
            if !rating.is_finite() {
                return Err(invalid("non-finite rating"));
            }
        }
        Ok(())
    }

    /// Title, description and tags joined by spaces.
    pub fn metadata_text(&self) -> String {
        let mut s = String::with_capacity(self.title.len() + self.description.len() + 16);
        s.push_str(&self.title);
        s.push(' ');
        s.push_str(&self.description);
        for tag in &self.tags {
            s.push(' ');
            s.push_str(tag);
        }
        s
    }

    fn rank_key(&self) -> u32 {
        self.search_rank.as_ref().map_or(u32::MAX, |r| r.rank)
    }
}

/// Binary grade on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Level::High
        } else {
            Level::Low
        }
    }

    pub fn is_high(self) -> bool {
        self == Level::High
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::High => "high",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "high" | "1" => Ok(Level::High),
            "low" | "0" => Ok(Level::Low),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

/// Label on one axis of a [`LabelSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisLabel {
    High,
    Low,
    #[default]
    Unlabeled,
}

impl AxisLabel {
    pub fn level(self) -> Option<Level> {
        match self {
            AxisLabel::High => Some(Level::High),
            AxisLabel::Low => Some(Level::Low),
            AxisLabel::Unlabeled => None,
        }
    }
}

impl From<Level> for AxisLabel {
    fn from(l: Level) -> Self {
        match l {
            Level::High => AxisLabel::High,
            Level::Low => AxisLabel::Low,
        }
    }
}

impl From<Option<Level>> for AxisLabel {
    fn from(l: Option<Level>) -> Self {
        l.map_or(AxisLabel::Unlabeled, AxisLabel::from)
    }
}

/// The two classification axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    #[serde(rename = "MED")]
    Med,
    #[serde(rename = "UND")]
    Und,
}

impl Dimension {
    pub const ALL: [Dimension; 2] = [Dimension::Med, Dimension::Und];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Med => "MED",
            Dimension::Und => "UND",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MED" => Ok(Dimension::Med),
            "UND" => Ok(Dimension::Und),
            other => Err(format!("unknown dimension {other:?}, expected MED or UND")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Human,
    AutoCotrain,
}

/// MED/UND labels of one video with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub video_id: String,
    #[serde(default)]
    pub med: AxisLabel,
    #[serde(default)]
    pub und: AxisLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<LabelSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
}

impl LabelSet {
    pub fn single(
        video_id: impl Into<String>,
        dimension: Dimension,
        level: Level,
        source: LabelSource,
        round: Option<u32>,
    ) -> Self {
        let mut set = LabelSet {
            video_id: video_id.into(),
            med: AxisLabel::Unlabeled,
            und: AxisLabel::Unlabeled,
            source: Some(source),
            round,
        };
        *set.axis_mut(dimension) = level.into();
        set
    }

    pub fn axis(&self, dimension: Dimension) -> AxisLabel {
        match dimension {
            Dimension::Med => self.med,
            Dimension::Und => self.und,
        }
    }

    pub fn axis_mut(&mut self, dimension: Dimension) -> &mut AxisLabel {
        match dimension {
            Dimension::Med => &mut self.med,
            Dimension::Und => &mut self.und,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid =
            |reason: &str| CorpusError::InvalidRecord { video_id: self.video_id.clone(), reason: reason.to_string() };
        let labeled = self.med != AxisLabel::Unlabeled || self.und != AxisLabel::Unlabeled;
        if !labeled && self.source.is_some() {
            return Err(invalid("unlabeled set carries a source"));
        }
        if labeled && self.source.is_none() {
            return Err(invalid("labeled set without a source"));
        }
        if self.source == Some(LabelSource::AutoCotrain) && self.round.is_none() {
            return Err(invalid("auto_cotrain label without round"));
        }
        Ok(())
    }
}

/// Per-video labels after merging every [`LabelSet`] naming the video.
pub type MergedLabels = std::collections::BTreeMap<String, (Option<Level>, Option<Level>)>;

/// Merges label sets by video id. The same axis labeled twice with different
/// values is an error.
pub fn merge_labels(labels: &[LabelSet]) -> Result<MergedLabels, CorpusError> {
    let mut merged = MergedLabels::new();
    for set in labels {
        let entry = merged.entry(set.video_id.clone()).or_insert((None, None));
        for dim in Dimension::ALL {
            let Some(level) = set.axis(dim).level() else { continue };
            let slot = match dim {
                Dimension::Med => &mut entry.0,
                Dimension::Und => &mut entry.1,
            };
            match slot {
                Some(existing) if *existing != level => {
                    return Err(CorpusError::ConflictingLabels { video_id: set.video_id.clone(), dimension: dim })
                }
                _ => *slot = Some(level),
            }
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBracket {
    Under20,
    B20_30,
    B30_40,
    B40_50,
    Over50,
    Unknown,
}

impl AgeBracket {
    pub fn as_str(self) -> &'static str {
        match self {
            AgeBracket::Under20 => "under20",
            AgeBracket::B20_30 => "b20_30",
            AgeBracket::B30_40 => "b30_40",
            AgeBracket::B40_50 => "b40_50",
            AgeBracket::Over50 => "over50",
            AgeBracket::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionSource {
    Face,
    Speech,
    Manual,
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Precomputed presenter demographics for one video.
///
/// `off_topic`, `unreadable` and `narration` drive the exclusion funnel of the
/// representativeness analysis; they default to an on-topic, readable,
/// narrated video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorAnnotation {
    pub video_id: String,
    pub actor_count: u32,
    pub face_visible: bool,
    pub gender: Gender,
    pub age_bracket: AgeBracket,
    pub detection_source: DetectionSource,
    #[serde(default, skip_serializing_if = "is_false")]
    pub off_topic: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub unreadable: bool,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub narration: bool,
}

impl ActorAnnotation {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid =
            |reason: &str| CorpusError::InvalidRecord { video_id: self.video_id.clone(), reason: reason.to_string() };
        if self.actor_count == 0 && self.face_visible {
            return Err(invalid("face visible with zero actors"));
        }
        // Multi-actor and undetectable videos leave the analysis anyway.
        let exempt = self.actor_count > 1 || self.unreadable || !self.narration;
        if !exempt {
            if self.gender == Gender::Unknown {
                return Err(invalid("gender unknown although detectable"));
            }
            if self.age_bracket == AgeBracket::Unknown && self.detection_source != DetectionSource::Speech {
                return Err(invalid("age unknown although detected from face"));
            }
        }
        Ok(())
    }
}

/// Outcome of a multi-term search ingest.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub records: Vec<VideoRecord>,
    /// Terms whose search failed, with the error message. They are skipped.
    pub failures: Vec<(String, String)>,
}

/// Runs one search per term and stamps each result with its term and rank.
///
/// Terms are searched concurrently; results are concatenated in term order.
pub fn ingest_search<C: CatalogClient + ?Sized>(
    terms: &[String],
    per_term: usize,
    client: &C,
) -> Result<IngestReport, CorpusError> {
    if per_term == 0 || per_term > MAX_SEARCH_RANK as usize {
        return Err(CorpusError::InvalidPerTerm(per_term));
    }
    let results: Vec<(String, Result<Vec<VideoRecord>, CatalogError>)> =
        terms.par_iter().map(|term| (term.clone(), client.search(term, per_term))).collect();
    let mut report = IngestReport::default();
    for (term, result) in results {
        match result {
            Ok(records) => {
                for (i, mut record) in records.into_iter().take(per_term).enumerate() {
                    record.search_rank = Some(SearchRank { search_term: term.clone(), rank: i as u32 + 1 });
                    report.records.push(record);
                }
            }
            Err(e) => report.failures.push((term, e.to_string())),
        }
    }
    Ok(report)
}

/// Keeps one record per video id: the occurrence with the lowest search rank,
/// earliest in input order on ties. The survivor takes the position of the
/// id's first appearance.
pub fn dedupe(records: Vec<VideoRecord>) -> Vec<VideoRecord> {
    let mut slot: HashMap<String, usize> = HashMap::with_capacity(records.len());
    let mut out: Vec<VideoRecord> = Vec::with_capacity(records.len());
    for record in records {
        match slot.get(&record.video_id) {
            Some(&i) => {
                if record.rank_key() < out[i].rank_key() {
                    out[i] = record;
                }
            }
            None => {
                slot.insert(record.video_id.clone(), out.len());
                out.push(record);
            }
        }
    }
    out
}

/// Fraction of characters that are ASCII; 0 for empty text.
pub fn ascii_ratio(text: &str) -> f64 {
    let (mut ascii, mut total) = (0usize, 0usize);
    for c in text.chars() {
        total += 1;
        if c.is_ascii() {
            ascii += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        ascii as f64 / total as f64
    }
}

fn primary_subtag(tag: &str) -> &str {
    tag.split(['-', '_']).next().unwrap_or("").trim()
}

/// Keeps records whose language tag matches `keep` (primary subtag,
/// case-insensitive). Untagged records pass when the ASCII ratio of
/// title + description reaches `ascii_threshold`.
pub fn filter_language(records: Vec<VideoRecord>, keep: &str, ascii_threshold: f64) -> Vec<VideoRecord> {
    let keep = primary_subtag(keep).to_ascii_lowercase();
    records
        .into_iter()
        .filter(|r| match &r.language {
            Some(tag) => primary_subtag(tag).eq_ignore_ascii_case(&keep),
            None => {
                let text = format!("{} {}", r.title, r.description);
                ascii_ratio(&text) >= ascii_threshold
            }
        })
        .collect()
}

pub fn read_corpus(path: &Path) -> Result<Vec<VideoRecord>, CorpusError> {
    let records: Vec<VideoRecord> = read_jsonl(path)?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

pub fn write_corpus(path: &Path, records: &[VideoRecord]) -> Result<(), CorpusError> {
    Ok(write_jsonl(path, records)?)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelSet>, CorpusError> {
    let labels: Vec<LabelSet> = read_jsonl(path)?;
    for l in &labels {
        l.validate()?;
    }
    Ok(labels)
}

pub fn read_annotations(path: &Path) -> Result<Vec<ActorAnnotation>, CorpusError> {
    let anns: Vec<ActorAnnotation> = read_jsonl(path)?;
    for a in &anns {
        a.validate()?;
    }
    Ok(anns)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use chrono::TimeZone;

    pub fn record(id: &str) -> VideoRecord {
        VideoRecord {
            video_id: id.to_string(),
            channel_id: "chan".to_string(),
            publish_time: Utc.with_ymd_and_hms(2021, 3, 4, 5, 6, 7).unwrap(),
            title: String::new(),
            description: String::new(),
            tags: Vec::new(),
            duration_seconds: 0,
            definition: Definition::Sd,
            captions_available: false,
            rating: None,
            view_count: 0,
            like_count: 0,
            dislike_count: 0,
            comment_count: 0,
            language: None,
            search_rank: None,
            subscriber_count: None,
            extra: Map::new(),
        }
    }

    pub fn ranked(id: &str, term: &str, rank: u32) -> VideoRecord {
        let mut r = record(id);
        r.search_rank = Some(SearchRank { search_term: term.to_string(), rank });
        r
    }
}
