//! Durable review-session state: a snapshot plus an append-only event log.
//!
//! Every mutation is applied in memory, then appended to `events.jsonl`
//! with a sequence number. Opening a store loads `snapshot.json` and
//! replays the events after its sequence number.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vidcurate_core::corpus::{Dimension, Level};
use vidcurate_core::cotrain::{CoTrainError, CoTrainState, ReviewItem, ReviewStatus, RoundReport, StopReason};

pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const EVENT_LOG_FILE: &str = "events.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("corrupt state in {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("dimension {0} is not served")]
    UnknownDimension(Dimension),
    #[error("no review item {video_id:?} on {dimension}")]
    NotFound { dimension: Dimension, video_id: String },
    #[error("review item {:?} changed: {reason}", .current.video_id)]
    Conflict { reason: String, current: Box<ReviewItem> },
    #[error("{} review items pending on {dimension}", .pending.len())]
    Pending { dimension: Dimension, pending: Vec<String> },
    #[error("stopping rule fired on {dimension}: {reasons:?}")]
    Stopped { dimension: Dimension, reasons: Vec<StopReason> },
    #[error(transparent)]
    CoTrain(#[from] CoTrainError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Io { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub video_id: String,
    pub dimension: Dimension,
    pub label: Level,
    pub resolver: String,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Label(LabelSubmission),
    Advance { dimension: Dimension, job: String, round: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelOutcome {
    Applied,
    /// The item already carries this label; nothing changed.
    Duplicate,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    states: BTreeMap<Dimension, CoTrainState>,
}

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    states: BTreeMap<Dimension, CoTrainState>,
    seq: u64,
    advances: u64,
    log: File,
}

impl SessionStore {
    /// Opens the store in `dir`, creating it from `init` when no snapshot
    /// exists yet.
    pub fn open<F>(dir: &Path, init: F) -> Result<Self, StoreError>
    where
        F: FnOnce() -> Result<BTreeMap<Dimension, CoTrainState>, StoreError>,
    {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let snapshot = if snap_path.exists() {
            let text = std::fs::read_to_string(&snap_path).map_err(|e| io_err(&snap_path, e))?;
            serde_json::from_str::<Snapshot>(&text)
                .map_err(|e| StoreError::Corrupt { path: snap_path.clone(), message: e.to_string() })?
        } else {
            let snap = Snapshot { seq: 0, states: init()? };
            write_snapshot(&snap_path, &snap)?;
            snap
        };
        let log_path = dir.join(EVENT_LOG_FILE);
        let events = read_events(&log_path)?;
        let log = OpenOptions::new().create(true).append(true).open(&log_path).map_err(|e| io_err(&log_path, e))?;
        let mut store =
            SessionStore { dir: dir.to_path_buf(), states: snapshot.states, seq: snapshot.seq, advances: 0, log };
        for event in events {
            if let EventKind::Advance { .. } = event.kind {
                store.advances += 1;
            }
            if event.seq <= snapshot.seq {
                continue;
            }
            if event.seq != store.seq + 1 {
                return Err(StoreError::Corrupt {
                    path: log_path.clone(),
                    message: format!("event {} follows {}", event.seq, store.seq),
                });
            }
            store.replay(&event).map_err(|e| StoreError::Corrupt {
                path: log_path.clone(),
                message: format!("event {} does not replay: {e}", event.seq),
            })?;
            store.seq = event.seq;
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn states(&self) -> &BTreeMap<Dimension, CoTrainState> {
        &self.states
    }

    pub fn state(&self, dimension: Dimension) -> Result<&CoTrainState, StoreError> {
        self.states.get(&dimension).ok_or(StoreError::UnknownDimension(dimension))
    }

    fn state_mut(&mut self, dimension: Dimension) -> Result<&mut CoTrainState, StoreError> {
        self.states.get_mut(&dimension).ok_or(StoreError::UnknownDimension(dimension))
    }

    fn replay(&mut self, event: &Event) -> Result<(), StoreError> {
        match &event.kind {
            EventKind::Label(sub) => match self.apply_label(sub)? {
                LabelOutcome::Applied => Ok(()),
                LabelOutcome::Duplicate => Err(StoreError::Corrupt {
                    path: self.dir.join(EVENT_LOG_FILE),
                    message: "logged label did not change state".into(),
                }),
            },
            EventKind::Advance { dimension, round, .. } => {
                let report = self.apply_advance(*dimension)?;
                if report.round != *round {
                    return Err(StoreError::Corrupt {
                        path: self.dir.join(EVENT_LOG_FILE),
                        message: format!("advance replayed to round {} instead of {round}", report.round),
                    });
                }
                Ok(())
            }
        }
    }

    fn apply_label(&mut self, sub: &LabelSubmission) -> Result<LabelOutcome, StoreError> {
        let state = self.state_mut(sub.dimension)?;
        let item = state
            .review_item(&sub.video_id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound { dimension: sub.dimension, video_id: sub.video_id.clone() })?;
        if item.status == ReviewStatus::Resolved {
            return if item.resolved_label == Some(sub.label) {
                Ok(LabelOutcome::Duplicate)
            } else {
                Err(StoreError::Conflict {
                    reason: "already resolved with a different label".into(),
                    current: Box::new(item),
                })
            };
        }
        if item.revision != sub.revision {
            return Err(StoreError::Conflict {
                reason: format!("stale revision {} (current {})", sub.revision, item.revision),
                current: Box::new(item),
            });
        }
        state.resolve_review(&sub.video_id, sub.label, &sub.resolver)?;
        Ok(LabelOutcome::Applied)
    }

    /// Errors when the dimension has pending items or the stopping rule has
    /// fired.
    pub fn check_advance(&self, dimension: Dimension) -> Result<(), StoreError> {
        let state = self.state(dimension)?;
        let pending = state.pending_ids();
        if !pending.is_empty() {
            return Err(StoreError::Pending { dimension, pending });
        }
        let stop = state.should_stop();
        if stop.stop {
            return Err(StoreError::Stopped { dimension, reasons: stop.reasons });
        }
        Ok(())
    }

    fn apply_advance(&mut self, dimension: Dimension) -> Result<RoundReport, StoreError> {
        self.check_advance(dimension)?;
        let state = self.state_mut(dimension)?;
        state.select_pools()?;
        let report = state.commit_round()?;
        state.check_partition()?;
        Ok(report)
    }

    fn append(&mut self, kind: EventKind) -> Result<u64, StoreError> {
        let event = Event { seq: self.seq + 1, kind };
        let line = serde_json::to_string(&event).expect("events serialize");
        let path = self.dir.join(EVENT_LOG_FILE);
        writeln!(self.log, "{line}").map_err(|e| io_err(&path, e))?;
        self.log.sync_data().map_err(|e| io_err(&path, e))?;
        self.seq = event.seq;
        Ok(event.seq)
    }

    /// Applies a submission and logs it when it changed the state.
    pub fn submit_label(&mut self, sub: &LabelSubmission) -> Result<LabelOutcome, StoreError> {
        let outcome = self.apply_label(sub)?;
        if outcome == LabelOutcome::Applied {
            self.append(EventKind::Label(sub.clone()))?;
        }
        Ok(outcome)
    }

    /// Next job id; ids continue across restarts.
    pub fn next_job_id(&self) -> String {
        format!("job-{:06}", self.advances + 1)
    }

    /// Runs one select/commit cycle and logs it under `job`.
    pub fn advance_round(&mut self, dimension: Dimension, job: &str) -> Result<RoundReport, StoreError> {
        let report = self.apply_advance(dimension)?;
        self.advances += 1;
        self.append(EventKind::Advance { dimension, job: job.to_string(), round: report.round })?;
        Ok(report)
    }

    /// Writes the current state as the new replay base.
    pub fn snapshot(&self) -> Result<(), StoreError> {
        write_snapshot(&self.dir.join(SNAPSHOT_FILE), &Snapshot { seq: self.seq, states: self.states.clone() })
    }
}

fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string(snap).expect("state serializes");
    std::fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Reads the log. A final line without its newline is a write cut short by
/// a crash and is dropped; any other unreadable line is corruption.
pub fn read_events(path: &Path) -> Result<Vec<Event>, StoreError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let raw = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let complete = raw.last().is_none_or(|b| *b == b'\n');
    let mut lines: Vec<String> =
        BufReader::new(raw.as_slice()).lines().collect::<Result<_, _>>().map_err(|e| io_err(path, e))?;
    if !complete {
        lines.pop();
        let keep = raw.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        let f = OpenOptions::new().write(true).open(path).map_err(|e| io_err(path, e))?;
        f.set_len(keep as u64).map_err(|e| io_err(path, e))?;
    }
    lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), message: format!("line {}: {e}", i + 1) })
        })
        .collect()
}
