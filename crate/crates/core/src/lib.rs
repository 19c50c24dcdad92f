//! Curation pipeline for consumer health-education videos: corpus handling,
//! medical-term and understandability measures, two-view co-training with
//! human review of conflicts, and representativeness auditing.

pub mod corpus;
pub mod cotrain;
pub mod fairness;
pub mod features;
pub mod io;
pub mod learners;
pub mod text;
pub mod textmeasure;
