//! Two feature views per video: a metadata view (title, description, tags and
//! a few numeric attributes) and a content view (transcript text plus an
//! optional externally computed visual embedding).

mod files;
mod vector;
mod vocab;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Definition, VideoRecord};

pub use files::{read_transcripts, read_views, read_visual_features, write_views, VisualFeatures};
pub use vector::FeatureVector;
pub use vocab::{fit_vocab, tfidf, Vocab, VocabEntry};

/// Numeric attributes appended after the metadata text block, in order.
pub const METADATA_NUMERIC_FEATURES: [&str; 4] = ["ln_duration", "captions", "hd", "ln_views"];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("min_df must be at least 1")]
    InvalidMinDf,
    #[error("content view unavailable for {0:?}: no transcript and no visual features")]
    ContentUnavailable(String),
    #[error("visual features for {video_id:?} have dimension {got}, expected {expected}")]
    VisualDimension { video_id: String, got: usize, expected: usize },
    #[error("feature index {index} out of range for dimension {dimension}")]
    IndexOutOfRange { index: usize, dimension: usize },
    #[error("non-finite feature weight at index {0}")]
    NonFinite(usize),
    #[error("{path}:{line}: {message}")]
    File { path: String, line: usize, message: String },
    #[error(transparent)]
    Format(#[from] crate::io::FormatError),
}

/// The two views of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPair {
    pub video_id: String,
    pub metadata_view: FeatureVector,
    pub content_view: FeatureVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataViewOptions {
    /// Whether `ln(1 + view_count)` enters the view. When off the coordinate
    /// stays in place and is always zero.
    pub include_view_count: bool,
}

impl Default for MetadataViewOptions {
    fn default() -> Self {
        MetadataViewOptions { include_view_count: true }
    }
}

pub fn build_metadata_view(record: &VideoRecord, vocab: &Vocab, options: MetadataViewOptions) -> FeatureVector {
    let text = tfidf(&record.metadata_text(), vocab);
    let numeric = [
        (record.duration_seconds as f64).ln_1p(),
        f64::from(u8::from(record.captions_available)),
        f64::from(u8::from(record.definition == Definition::Hd)),
        if options.include_view_count { (record.view_count as f64).ln_1p() } else { 0.0 },
    ];
    let numeric = FeatureVector::from_dense(&numeric);
    text.concat(&numeric)
}

/// Transcript tf-idf block followed by a visual block of `visual_dim`
/// coordinates (zero when no visual features are given).
pub fn build_content_view(
    video_id: &str,
    transcript: Option<&str>,
    visual: Option<&FeatureVector>,
    content_vocab: &Vocab,
    visual_dim: usize,
) -> Result<FeatureVector, FeatureError> {
    if transcript.is_none() && visual.is_none() {
        return Err(FeatureError::ContentUnavailable(video_id.to_string()));
    }
    let text_block = match transcript {
        Some(t) => tfidf(t, content_vocab),
        None => FeatureVector::zeros(content_vocab.len()),
    };
    let visual_block = match visual {
        Some(v) if v.dimension() != visual_dim => {
            return Err(FeatureError::VisualDimension {
                video_id: video_id.to_string(),
                got: v.dimension(),
                expected: visual_dim,
            })
        }
        Some(v) => v.clone(),
        None => FeatureVector::zeros(visual_dim),
    };
    Ok(text_block.concat(&visual_block))
}

/// Fitted vocabularies for both views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub metadata_vocab: Vocab,
    pub content_vocab: Vocab,
    pub visual_dim: usize,
    pub options: MetadataViewOptions,
}

impl Featurizer {
    /// Fits the metadata vocabulary on every record's metadata text and the
    /// content vocabulary on the available transcripts.
    pub fn fit(
        records: &[VideoRecord],
        transcripts: &std::collections::BTreeMap<String, String>,
        visual_dim: usize,
        min_df: usize,
        options: MetadataViewOptions,
    ) -> Result<Self, FeatureError> {
        let meta_texts: Vec<String> = records.iter().map(VideoRecord::metadata_text).collect();
        let content_texts: Vec<&str> =
            records.iter().filter_map(|r| transcripts.get(&r.video_id).map(String::as_str)).collect();
        Ok(Featurizer {
            metadata_vocab: fit_vocab(&meta_texts, min_df)?,
            content_vocab: fit_vocab(&content_texts, min_df)?,
            visual_dim,
            options,
        })
    }

    pub fn metadata_dimension(&self) -> usize {
        self.metadata_vocab.len() + METADATA_NUMERIC_FEATURES.len()
    }

    pub fn content_dimension(&self) -> usize {
        self.content_vocab.len() + self.visual_dim
    }

    pub fn view(
        &self,
        record: &VideoRecord,
        transcript: Option<&str>,
        visual: Option<&FeatureVector>,
    ) -> Result<ViewPair, FeatureError> {
        Ok(ViewPair {
            video_id: record.video_id.clone(),
            metadata_view: build_metadata_view(record, &self.metadata_vocab, self.options),
            content_view: build_content_view(
                &record.video_id,
                transcript,
                visual,
                &self.content_vocab,
                self.visual_dim,
            )?,
        })
    }

    /// Views for every record, in input order; computed in parallel.
    pub fn views(
        &self,
        records: &[VideoRecord],
        transcripts: &std::collections::BTreeMap<String, String>,
        visual: Option<&VisualFeatures>,
    ) -> Vec<Result<ViewPair, FeatureError>> {
        records
            .par_iter()
            .map(|r| {
                let t = transcripts.get(&r.video_id).map(String::as_str);
                let v = visual.and_then(|vf| vf.vectors.get(&r.video_id));
                self.view(r, t, v)
            })
            .collect()
    }
}
