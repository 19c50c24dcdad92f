//! Medical-term extraction, PEMAT understandability scoring and inter-rater
//! agreement.

mod kappa;
mod lexicon;
mod pemat;
mod terms;

use thiserror::Error;

use crate::corpus::Level;

pub use kappa::cohen_kappa;
pub use lexicon::{Lexicon, SemType};
pub use pemat::{pemat_score, read_rubrics, PematResponse, PematRubric};
pub use terms::{extract_terms, med_score, TermHit};

/// Default token-coverage threshold for a high-MED label.
pub const DEFAULT_MED_THRESHOLD: f64 = 0.05;
/// Default PEMAT score threshold for a high-UND label.
pub const DEFAULT_UND_THRESHOLD: f64 = 0.70;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("undefined score: every rubric item is NA")]
    UndefinedScore,
    #[error("rubric has no items")]
    EmptyRubric,
    #[error("duplicate criterion {0:?} in rubric")]
    DuplicateCriterion(String),
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label vectors are empty")]
    Empty,
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("rubric line {line}: {message}")]
    Rubric { line: usize, message: String },
    #[error(transparent)]
    Format(#[from] crate::io::FormatError),
}

/// A classification cut-off in the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self, MeasureError> {
        if value > 0.0 && value < 1.0 {
            Ok(Threshold(value))
        } else {
            Err(MeasureError::InvalidThreshold(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// High iff `score >= threshold`.
    pub fn classify(self, score: f64) -> Level {
        Level::from_positive(score >= self.0)
    }
}

pub fn classify_med(score: f64, threshold: Threshold) -> Level {
    threshold.classify(score)
}

pub fn classify_und(score: f64, threshold: Threshold) -> Level {
    threshold.classify(score)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_bounds() {
        assert!(Threshold::new(0.0).is_err());
        assert!(Threshold::new(1.0).is_err());
        assert!(Threshold::new(f64::NAN).is_err());
        assert!(Threshold::new(0.5).is_ok());
    }

    #[test]
    fn med_classification() {
        let t = Threshold::new(0.10).unwrap();
        assert_eq!(classify_med(0.25, t), Level::High);
        assert_eq!(classify_med(0.0, t), Level::Low);
        assert_eq!(classify_med(0.10, t), Level::High);
    }

    #[test]
    fn und_classification() {
        let t = Threshold::new(DEFAULT_UND_THRESHOLD).unwrap();
        assert_eq!(classify_und(0.8, t), Level::High);
        assert_eq!(classify_und(0.5, t), Level::Low);
        assert_eq!(classify_und(0.7, t), Level::High);
    }
}
