//! Representativeness auditing: the analysis frame and its funnel,
//! descriptive tables, correlations, GLM and lasso regressions, parity of
//! recommended sets and fairness-constrained ranking.

use thiserror::Error;

use crate::corpus::CorpusError;

mod frame;
mod glm;
mod lasso;
mod parity;
mod report;
mod stats;

pub use frame::{
    age_gender_table, build_frame, crosstab, split, train_size, CrossTab, Exclusion, FrameRow, FunnelReport,
    GenderCoding, RegressionFrame, SplitDescriptor,
};
pub use glm::{fit_glm, simple_slopes, Coefficient, Family, Formula, GlmFit, SimpleSlope, Term};
pub use lasso::{
    coordinate_descent, fit_lasso, fold_assignment, kkt_violation, lambda_max, log_grid, standardize, CdSettings,
    LassoConfig, LassoFit, Standardized,
};
pub use parity::{
    base_order, check_prefixes, frame_candidates, parity_report, population_shares, recommend, rerank, Attribute,
    Candidate, FairnessConfig, GroupParity, ParityReport, PrefixCheck, PrefixStatus, Recommendation,
};
pub use report::{audit, AuditConfig, AuditReport, Hypothesis, ModelPair, SplitAssignment};
pub use stats::{pearson, pearson_matrix, t_two_sided, z_two_sided, Correlation, CorrelationMatrix};

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("unknown video id {0:?}")]
    DanglingId(String),
    #[error("video {0:?} annotated twice")]
    DuplicateAnnotation(String),
    #[error("video {0:?} is analyzable but its gender is unknown")]
    UnknownGender(String),
    #[error("frame is empty")]
    EmptyFrame,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("design matrix is rank deficient: column {0} is collinear with earlier columns")]
    Collinear(String),
    #[error("{method} did not converge in {iterations} iterations")]
    NotConverged { method: &'static str, iterations: usize },
    #[error("recommendation set is empty")]
    EmptyRecommendation,
    #[error("no recommended video has a known {0}")]
    NoKnownGroup(&'static str),
    #[error("candidate {0:?} listed twice")]
    DuplicateCandidate(String),
    #[error("{0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[cfg(test)]
mod tests;
