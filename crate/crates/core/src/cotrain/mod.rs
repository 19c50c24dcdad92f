//! Two-view co-training with human review of confident disagreements.
//!
//! `F1` is a logistic regression on the metadata view and `F2` a random forest
//! on the content view. Each round both classifiers score the unlabeled pool;
//! items that both call positive (or both negative) with confidence at least
//! `tau` are labeled automatically, items the two call confidently in
//! opposite directions go to a human, and everything else waits.

mod run;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dimension, LabelSet, LabelSource, Level};
use crate::features::ViewPair;
use crate::io::FormatError;
use crate::learners::{
    evaluate, fit_forest, fit_logreg, EvalReport, ForestModel, ForestParams, LearnError, LogRegModel, LogRegParams,
};

pub use run::{
    read_audit_log, read_checkpoint, run, write_checkpoint, FnResolver, Resolver, ResolverError, RunOptions,
    RunOutcome, TranscriptEntry, TranscriptResolver,
};

#[derive(Debug, Error)]
pub enum CoTrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("video id {0:?} appears more than once")]
    DuplicateId(String),
    #[error("{view} view of {video_id:?} has dimension {got}, expected {expected}")]
    ViewDimension { video_id: String, view: &'static str, got: usize, expected: usize },
    #[error("no pools selected for round {0}")]
    NoPools(u32),
    #[error("no review item for {0:?}")]
    UnknownReviewItem(String),
    #[error("conflicting resolution for {video_id:?}: already {existing}, got {requested}")]
    ConflictingResolution { video_id: String, existing: Level, requested: Level },
    #[error("resolver failed on {video_id:?}: {message}{}", checkpoint.as_ref().map(|p| format!(" (state saved to {p})")).unwrap_or_default())]
    ResolverFailed { video_id: String, message: String, checkpoint: Option<String> },
    #[error("partition violated: {0}")]
    Partition(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoTrainConfig {
    pub target: Dimension,
    pub k_pos: usize,
    pub k_neg: usize,
    /// Confidence an item needs to enter a pool, in (0.5, 1).
    pub tau: f64,
    /// Smallest per-round gain in validation macro-F1 that counts as progress.
    pub epsilon: f64,
    /// Rounds without progress before stopping.
    pub patience: usize,
    pub max_rounds: u32,
    pub seed: u64,
    /// Decision threshold for the validation reports.
    pub threshold: f64,
    pub logreg: LogRegParams,
    /// Forest parameters; the seed is taken from `seed`.
    pub forest: ForestParams,
}

impl Default for CoTrainConfig {
    fn default() -> Self {
        CoTrainConfig {
            target: Dimension::Med,
            k_pos: 10,
            k_neg: 10,
            tau: 0.9,
            epsilon: 0.002,
            patience: 3,
            max_rounds: 50,
            seed: 0,
            threshold: 0.5,
            logreg: LogRegParams::default(),
            forest: ForestParams::default(),
        }
    }
}

impl CoTrainConfig {
    pub fn validate(&self) -> Result<(), CoTrainError> {
        let bad = |m: String| Err(CoTrainError::InvalidConfig(m));
        if self.k_pos == 0 || self.k_neg == 0 {
            return bad("k_pos and k_neg must be at least 1".into());
        }
        if !(self.tau > 0.5 && self.tau < 1.0) {
            return bad(format!("tau must be in (0.5, 1), got {}", self.tau));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold must be in (0, 1), got {}", self.threshold));
        }
        Ok(())
    }

    fn forest_params(&self) -> ForestParams {
        ForestParams { seed: self.seed, ..self.forest }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub label: Level,
    pub source: LabelSource,
    /// Round the label was created in; `None` for seed labels.
    pub round: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Pending,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub video_id: String,
    pub dimension: Dimension,
    pub f1_proba: f64,
    pub f2_proba: f64,
    pub created_round: u32,
    pub status: ReviewStatus,
    pub resolved_label: Option<Level>,
    pub resolver: Option<String>,
    /// Starts at 1 and increases with every change to the item.
    pub revision: u64,
}

/// Confidence pools of one selection, each ordered by decreasing confidence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pools {
    pub round: u32,
    pub p1: Vec<String>,
    pub n1: Vec<String>,
    pub p2: Vec<String>,
    pub n2: Vec<String>,
    /// `(F1, F2)` positive-class probabilities of every unlabeled id.
    pub probas: BTreeMap<String, (f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    AutoPositive,
    AutoNegative,
    Queued,
    /// Confident under one view only; stays unlabeled.
    Waiting,
    /// In no pool; stays unlabeled.
    Unconfident,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub video_id: String,
    pub round: u32,
    pub disposition: Disposition,
    pub f1_proba: f64,
    pub f2_proba: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub dimension: Option<Dimension>,
    pub entries: Vec<RoundEntry>,
}

impl RoundReport {
    pub fn count(&self, d: Disposition) -> usize {
        self.entries.iter().filter(|e| e.disposition == d).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: u32,
    pub labeled: usize,
    pub unlabeled: usize,
    pub pending: usize,
    /// Ensemble report on the validation set, when one was supplied.
    pub validation: Option<EvalReport>,
}

impl HistoryEntry {
    pub fn metric(&self) -> Option<f64> {
        self.validation.as_ref().and_then(EvalReport::macro_f1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Depleted,
    Plateau,
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopDecision {
    pub stop: bool,
    pub reasons: Vec<StopReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationItem {
    pub views: ViewPair,
    pub label: Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoTrainState {
    pub config: CoTrainConfig,
    /// Views of every corpus id handled by this engine.
    pub views: BTreeMap<String, ViewPair>,
    pub labeled: BTreeMap<String, LabeledEntry>,
    pub unlabeled: BTreeSet<String>,
    pub discarded: BTreeSet<String>,
    pub review_queue: Vec<ReviewItem>,
    pub round: u32,
    pub pools: Option<Pools>,
    pub f1: LogRegModel,
    pub f2: ForestModel,
    pub history: Vec<HistoryEntry>,
    pub validation: Vec<ValidationItem>,
    /// Set when `labeled` changed after the last fit.
    pub stale_models: bool,
}

fn check_views<'a>(views: impl Iterator<Item = &'a ViewPair>) -> Result<(), CoTrainError> {
    let mut dims: Option<(usize, usize)> = None;
    for v in views {
        let (m, c) = (v.metadata_view.dimension(), v.content_view.dimension());
        let (em, ec) = *dims.get_or_insert((m, c));
        if m != em {
            return Err(CoTrainError::ViewDimension {
                video_id: v.video_id.clone(),
                view: "metadata",
                got: m,
                expected: em,
            });
        }
        if c != ec {
            return Err(CoTrainError::ViewDimension {
                video_id: v.video_id.clone(),
                view: "content",
                got: c,
                expected: ec,
            });
        }
    }
    Ok(())
}

/// Builds the engine state and fits both classifiers on the seed labels.
pub fn init_state(
    labeled: Vec<(ViewPair, Level)>,
    unlabeled: Vec<ViewPair>,
    validation: Vec<(ViewPair, Level)>,
    config: CoTrainConfig,
) -> Result<CoTrainState, CoTrainError> {
    config.validate()?;
    check_views(labeled.iter().map(|p| &p.0).chain(unlabeled.iter()).chain(validation.iter().map(|p| &p.0)))?;
    let mut views = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for (v, level) in labeled {
        labels.insert(v.video_id.clone(), LabeledEntry { label: level, source: LabelSource::Human, round: None });
        if let Some(prev) = views.insert(v.video_id.clone(), v) {
            return Err(CoTrainError::DuplicateId(prev.video_id));
        }
    }
    let mut u = BTreeSet::new();
    for v in unlabeled {
        u.insert(v.video_id.clone());
        if let Some(prev) = views.insert(v.video_id.clone(), v) {
            return Err(CoTrainError::DuplicateId(prev.video_id));
        }
    }
    let (f1, f2) = fit_models(&views, &labels, &config)?;
    let mut state = CoTrainState {
        config,
        views,
        labeled: labels,
        unlabeled: u,
        discarded: BTreeSet::new(),
        review_queue: Vec::new(),
        round: 0,
        pools: None,
        f1,
        f2,
        history: Vec::new(),
        validation: validation.into_iter().map(|(views, label)| ValidationItem { views, label }).collect(),
        stale_models: false,
    };
    state.record_history()?;
    Ok(state)
}

fn fit_models(
    views: &BTreeMap<String, ViewPair>,
    labels: &BTreeMap<String, LabeledEntry>,
    config: &CoTrainConfig,
) -> Result<(LogRegModel, ForestModel), CoTrainError> {
    let mut xm = Vec::with_capacity(labels.len());
    let mut xc = Vec::with_capacity(labels.len());
    let mut y = Vec::with_capacity(labels.len());
    for (id, entry) in labels {
        let v = &views[id];
        xm.push(v.metadata_view.clone());
        xc.push(v.content_view.clone());
        y.push(entry.label.is_high());
    }
    let f1 = fit_logreg(&xm, &y, config.logreg)?;
    let f2 = fit_forest(&xc, &y, config.forest_params())?;
    Ok((f1, f2))
}

/// Indices of the top `k` scores at or above `tau`, ties by id.
fn top_k(scored: &[(&String, f64)], k: usize, tau: f64) -> Vec<String> {
    let mut eligible: Vec<&(&String, f64)> = scored.iter().filter(|(_, s)| *s >= tau).collect();
    eligible.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    eligible.into_iter().take(k).map(|(id, _)| (*id).clone()).collect()
}

impl CoTrainState {
    /// `(F1, F2)` positive-class probabilities for a pair of views.
    pub fn predict(&self, views: &ViewPair) -> Result<(f64, f64), CoTrainError> {
        Ok((self.f1.predict_proba(&views.metadata_view)?, self.f2.predict_proba(&views.content_view)?))
    }

    /// Mean of the two classifiers' positive-class probabilities.
    pub fn ensemble_proba(&self, views: &ViewPair) -> Result<f64, CoTrainError> {
        let (a, b) = self.predict(views)?;
        Ok((a + b) / 2.0)
    }

    pub fn pending(&self) -> impl Iterator<Item = &ReviewItem> {
        self.review_queue.iter().filter(|i| i.status == ReviewStatus::Pending)
    }

    pub fn pending_ids(&self) -> Vec<String> {
        self.pending().map(|i| i.video_id.clone()).collect()
    }

    pub fn review_item(&self, video_id: &str) -> Option<&ReviewItem> {
        self.review_queue.iter().find(|i| i.video_id == video_id)
    }

    /// Scores the unlabeled pool and stores the resulting pools.
    pub fn select_pools(&mut self) -> Result<&Pools, CoTrainError> {
        let mut probas = BTreeMap::new();
        for id in &self.unlabeled {
            probas.insert(id.clone(), self.predict(&self.views[id])?);
        }
        let c = &self.config;
        let pos1: Vec<(&String, f64)> = probas.iter().map(|(id, p)| (id, p.0)).collect();
        let neg1: Vec<(&String, f64)> = probas.iter().map(|(id, p)| (id, 1.0 - p.0)).collect();
        let pos2: Vec<(&String, f64)> = probas.iter().map(|(id, p)| (id, p.1)).collect();
        let neg2: Vec<(&String, f64)> = probas.iter().map(|(id, p)| (id, 1.0 - p.1)).collect();
        let pools = Pools {
            round: self.round,
            p1: top_k(&pos1, c.k_pos, c.tau),
            n1: top_k(&neg1, c.k_neg, c.tau),
            p2: top_k(&pos2, c.k_pos, c.tau),
            n2: top_k(&neg2, c.k_neg, c.tau),
            probas,
        };
        Ok(self.pools.insert(pools))
    }

    /// Applies the current pools: consistent items are labeled, conflicting
    /// ones queued for review, then both classifiers are refit.
    pub fn commit_round(&mut self) -> Result<RoundReport, CoTrainError> {
        let pools = match &self.pools {
            Some(p) if p.round == self.round => p.clone(),
            _ => return Err(CoTrainError::NoPools(self.round)),
        };
        let set = |v: &[String]| v.iter().cloned().collect::<BTreeSet<String>>();
        let (p1, n1, p2, n2) = (set(&pools.p1), set(&pools.n1), set(&pools.p2), set(&pools.n2));
        let round = self.round + 1;
        let mut entries = Vec::with_capacity(pools.probas.len());
        for (id, &(a, b)) in &pools.probas {
            let (in_p1, in_n1, in_p2, in_n2) = (p1.contains(id), n1.contains(id), p2.contains(id), n2.contains(id));
            let disposition = if in_p1 && in_p2 {
                Disposition::AutoPositive
            } else if in_n1 && in_n2 {
                Disposition::AutoNegative
            } else if (in_p1 && in_n2) || (in_n1 && in_p2) {
                Disposition::Queued
            } else if in_p1 || in_n1 || in_p2 || in_n2 {
                Disposition::Waiting
            } else {
                Disposition::Unconfident
            };
            match disposition {
                Disposition::AutoPositive | Disposition::AutoNegative => {
                    self.unlabeled.remove(id);
                    self.labeled.insert(
                        id.clone(),
                        LabeledEntry {
                            label: Level::from_positive(disposition == Disposition::AutoPositive),
                            source: LabelSource::AutoCotrain,
                            round: Some(round),
                        },
                    );
                    self.stale_models = true;
                }
                Disposition::Queued => {
                    self.unlabeled.remove(id);
                    self.review_queue.push(ReviewItem {
                        video_id: id.clone(),
                        dimension: self.config.target,
                        f1_proba: a,
                        f2_proba: b,
                        created_round: round,
                        status: ReviewStatus::Pending,
                        resolved_label: None,
                        resolver: None,
                        revision: 1,
                    });
                }
                Disposition::Waiting | Disposition::Unconfident => {}
            }
            entries.push(RoundEntry { video_id: id.clone(), round, disposition, f1_proba: a, f2_proba: b });
        }
        self.refit()?;
        self.round = round;
        self.record_history()?;
        Ok(RoundReport { round, dimension: Some(self.config.target), entries })
    }

    /// Refits both classifiers if the labeled set changed since the last fit.
    pub fn refit(&mut self) -> Result<(), CoTrainError> {
        if self.stale_models {
            let (f1, f2) = fit_models(&self.views, &self.labeled, &self.config)?;
            self.f1 = f1;
            self.f2 = f2;
            self.stale_models = false;
        }
        Ok(())
    }

    /// Records a human decision on a queued item. Repeating the same decision
    /// changes nothing; a different decision on a resolved item is an error.
    /// Returns whether the state changed.
    pub fn resolve_review(&mut self, video_id: &str, label: Level, resolver: &str) -> Result<bool, CoTrainError> {
        let item = self
            .review_queue
            .iter_mut()
            .find(|i| i.video_id == video_id)
            .ok_or_else(|| CoTrainError::UnknownReviewItem(video_id.to_string()))?;
        if item.status == ReviewStatus::Resolved {
            let existing = item.resolved_label.expect("resolved items carry a label");
            if existing == label {
                return Ok(false);
            }
            return Err(CoTrainError::ConflictingResolution {
                video_id: video_id.to_string(),
                existing,
                requested: label,
            });
        }
        item.status = ReviewStatus::Resolved;
        item.resolved_label = Some(label);
        item.resolver = Some(resolver.to_string());
        item.revision += 1;
        let round = item.created_round;
        self.labeled
            .insert(video_id.to_string(), LabeledEntry { label, source: LabelSource::Human, round: Some(round) });
        self.stale_models = true;
        Ok(true)
    }

    fn record_history(&mut self) -> Result<(), CoTrainError> {
        let validation = if self.validation.is_empty() {
            None
        } else {
            let mut scores = Vec::with_capacity(self.validation.len());
            for item in &self.validation {
                scores.push(self.ensemble_proba(&item.views)?);
            }
            let y: Vec<bool> = self.validation.iter().map(|v| v.label.is_high()).collect();
            Some(evaluate(&scores, &y, self.config.threshold)?)
        };
        let pending = self.pending().count();
        self.history.push(HistoryEntry {
            round: self.round,
            labeled: self.labeled.len(),
            unlabeled: self.unlabeled.len(),
            pending,
            validation,
        });
        Ok(())
    }

    pub fn should_stop(&self) -> StopDecision {
        let mut reasons = Vec::new();
        if self.unlabeled.is_empty() && self.pending().next().is_none() {
            reasons.push(StopReason::Depleted);
        }
        if self.plateaued() {
            reasons.push(StopReason::Plateau);
        }
        if self.round >= self.config.max_rounds {
            reasons.push(StopReason::MaxRounds);
        }
        StopDecision { stop: !reasons.is_empty(), reasons }
    }

    /// True when each of the last `patience` rounds improved the validation
    /// metric by less than `epsilon` over the round before.
    fn plateaued(&self) -> bool {
        let r = self.config.patience;
        if self.history.len() < r + 1 {
            return false;
        }
        let tail = &self.history[self.history.len() - r - 1..];
        tail.windows(2).all(|w| match (w[0].metric(), w[1].metric()) {
            (Some(a), Some(b)) => b - a < self.config.epsilon,
            _ => false,
        })
    }

    /// Moves every remaining unlabeled id to the discarded set.
    pub fn discard_unlabeled(&mut self) -> Vec<String> {
        let ids: Vec<String> = std::mem::take(&mut self.unlabeled).into_iter().collect();
        self.discarded.extend(ids.iter().cloned());
        ids
    }

    /// Checks that labeled, unlabeled, pending and discarded ids partition
    /// the corpus.
    pub fn check_partition(&self) -> Result<(), CoTrainError> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        let groups: [(&str, Vec<&str>); 4] = [
            ("labeled", self.labeled.keys().map(String::as_str).collect()),
            ("unlabeled", self.unlabeled.iter().map(String::as_str).collect()),
            ("pending", self.pending().map(|i| i.video_id.as_str()).collect()),
            ("discarded", self.discarded.iter().map(String::as_str).collect()),
        ];
        for (name, ids) in &groups {
            for id in ids {
                if let Some(other) = seen.insert(id, name) {
                    return Err(CoTrainError::Partition(format!("{id:?} is both {other} and {name}")));
                }
            }
        }
        if seen.len() != self.views.len() || !self.views.keys().all(|k| seen.contains_key(k.as_str())) {
            let missing: Vec<&String> = self.views.keys().filter(|k| !seen.contains_key(k.as_str())).collect();
            return Err(CoTrainError::Partition(format!("ids outside every set: {missing:?}")));
        }
        Ok(())
    }

    /// Current labels as label sets on the target dimension, ordered by id.
    pub fn label_sets(&self) -> Vec<LabelSet> {
        self.labeled
            .iter()
            .map(|(id, e)| LabelSet::single(id.clone(), self.config.target, e.label, e.source, e.round))
            .collect()
    }
}
