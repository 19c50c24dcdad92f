//! HTTP review service over the co-training queue.

mod api;
pub mod store;

pub use api::{JobState, JobStatus, QueueEntry, ReadView, ServeError, Service, ServiceConfig, Stats, VideoInfo};
pub use store::{Event, EventKind, LabelOutcome, LabelSubmission, SessionStore, StoreError};
