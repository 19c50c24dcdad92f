use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CoTrainError, CoTrainState, HistoryEntry, ReviewItem, RoundEntry, RoundReport, StopDecision};
use crate::corpus::{Dimension, LabelSet, Level};
use crate::io::{read_jsonl, read_to_string, write_string, FormatError};

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ResolverError(pub String);

/// Answers review items. Returns the label and the resolver's name.
pub trait Resolver {
    fn resolve(&mut self, item: &ReviewItem) -> Result<(Level, String), ResolverError>;
}

/// Resolver backed by a closure.
pub struct FnResolver<F>(pub F);

impl<F> Resolver for FnResolver<F>
where
    F: FnMut(&ReviewItem) -> Result<(Level, String), ResolverError>,
{
    fn resolve(&mut self, item: &ReviewItem) -> Result<(Level, String), ResolverError> {
        (self.0)(item)
    }
}

/// One recorded human decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub video_id: String,
    pub dimension: Dimension,
    pub label: Level,
    pub resolver: String,
}

/// Replays recorded decisions; an item without a recorded decision fails.
#[derive(Debug, Clone, Default)]
pub struct TranscriptResolver {
    decisions: BTreeMap<(Dimension, String), (Level, String)>,
}

impl TranscriptResolver {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        TranscriptResolver {
            decisions: entries.into_iter().map(|e| ((e.dimension, e.video_id), (e.label, e.resolver))).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Ok(Self::new(read_jsonl::<TranscriptEntry>(path)?))
    }

    pub fn get(&self, dimension: Dimension, video_id: &str) -> Option<&(Level, String)> {
        self.decisions.get(&(dimension, video_id.to_string()))
    }
}

impl Resolver for TranscriptResolver {
    fn resolve(&mut self, item: &ReviewItem) -> Result<(Level, String), ResolverError> {
        self.get(item.dimension, &item.video_id)
            .cloned()
            .ok_or_else(|| ResolverError(format!("no recorded decision for {} {}", item.dimension, item.video_id)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for per-round snapshots (`round-NNNN.json`) and the
    /// `resume.json` written when the resolver fails.
    pub checkpoint_dir: Option<PathBuf>,
    /// Line-delimited log of every round's dispositions, appended to.
    pub audit_log: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub labels: Vec<LabelSet>,
    /// Ids still unlabeled when the loop stopped. They receive no label.
    pub discarded: Vec<String>,
    pub history: Vec<HistoryEntry>,
    pub stop: StopDecision,
    pub reports: Vec<RoundReport>,
}

pub fn write_checkpoint(path: &Path, state: &CoTrainState) -> Result<(), CoTrainError> {
    let json = serde_json::to_string(state)
        .map_err(|e| CoTrainError::Checkpoint { path: path.display().to_string(), message: e.to_string() })?;
    Ok(write_string(path, &json)?)
}

pub fn read_checkpoint(path: &Path) -> Result<CoTrainState, CoTrainError> {
    let text = read_to_string(path)?;
    let state: CoTrainState = serde_json::from_str(&text)
        .map_err(|e| CoTrainError::Checkpoint { path: path.display().to_string(), message: e.to_string() })?;
    state.config.validate()?;
    state.check_partition()?;
    Ok(state)
}

pub fn read_audit_log(path: &Path) -> Result<Vec<RoundEntry>, FormatError> {
    read_jsonl(path)
}

fn append_audit(path: &Path, report: &RoundReport) -> Result<(), CoTrainError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| FormatError::io(path, e))?;
    let mut buf = String::new();
    for entry in &report.entries {
        buf.push_str(&serde_json::to_string(entry).expect("round entries serialize"));
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| FormatError::io(path, e))?;
    Ok(())
}

/// Asks the resolver about every pending item, in queue order.
fn drain<R: Resolver + ?Sized>(
    state: &mut CoTrainState,
    resolver: &mut R,
    opts: &RunOptions,
) -> Result<(), CoTrainError> {
    for item in state.pending().cloned().collect::<Vec<_>>() {
        match resolver.resolve(&item) {
            Ok((label, name)) => {
                state.resolve_review(&item.video_id, label, &name)?;
            }
            Err(e) => {
                let checkpoint = match &opts.checkpoint_dir {
                    Some(dir) => {
                        let path = dir.join("resume.json");
                        write_checkpoint(&path, state)?;
                        Some(path.display().to_string())
                    }
                    None => None,
                };
                return Err(CoTrainError::ResolverFailed { video_id: item.video_id, message: e.0, checkpoint });
            }
        }
    }
    Ok(())
}

/// Runs rounds until the stopping rule fires, refits on the final labeled
/// set and discards whatever is still unlabeled. Pending items left over
/// from an interrupted run are resolved first, so a state read back from a
/// checkpoint can be passed straight in.
pub fn run<R: Resolver + ?Sized>(
    state: &mut CoTrainState,
    resolver: &mut R,
    opts: &RunOptions,
) -> Result<RunOutcome, CoTrainError> {
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    }
    drain(state, resolver, opts)?;
    let mut reports = Vec::new();
    let stop = loop {
        let decision = state.should_stop();
        if decision.stop {
            break decision;
        }
        state.select_pools()?;
        let report = state.commit_round()?;
        if let Some(log) = &opts.audit_log {
            append_audit(log, &report)?;
        }
        state.check_partition()?;
        drain(state, resolver, opts)?;
        state.check_partition()?;
        if let Some(dir) = &opts.checkpoint_dir {
            write_checkpoint(&dir.join(format!("round-{:04}.json", state.round)), state)?;
        }
        reports.push(report);
    };
    state.refit()?;
    let discarded = state.discard_unlabeled();
    state.check_partition()?;
    Ok(RunOutcome { labels: state.label_sets(), discarded, history: state.history.clone(), stop, reports })
}
