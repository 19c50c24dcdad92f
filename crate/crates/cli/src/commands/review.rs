use std::collections::BTreeMap;
use std::net::SocketAddr;

use serde::Deserialize;
use vidcurate_core::corpus::{read_corpus, Dimension};
use vidcurate_core::io::read_jsonl;
use vidcurate_core::textmeasure::TermHit;
use vidcurate_service::{Service, ServiceConfig, SessionStore, StoreError, VideoInfo};

use super::{dimensions, report};
use crate::commands::cotrain::initial_state;
use crate::config::{produced, PipelineConfig};
use crate::error::CliError;

#[derive(Deserialize)]
struct VideoHits {
    video_id: String,
    hits: Vec<TermHit>,
}

/// Serves the review queue. A fresh state directory starts from the seed
/// labels, exactly as `cotrain run` would; an existing one is replayed.
pub fn serve(cfg: &PipelineConfig, only: Option<Dimension>) -> Result<(), CliError> {
    let bind: SocketAddr =
        cfg.review.bind.parse().map_err(|e| CliError::usage(format!("bad bind address {:?}: {e}", cfg.review.bind)))?;
    let out = cfg.out();
    let state_dir = cfg.review.state_dir.clone().unwrap_or_else(|| out.join("review"));
    let mut init_err = None;
    let store = SessionStore::open(&state_dir, || {
        let mut states = BTreeMap::new();
        for d in dimensions(only) {
            match initial_state(cfg, d) {
                Ok(s) => {
                    states.insert(d, s);
                }
                Err(e) => {
                    let message = e.message.clone();
                    init_err = Some(e);
                    return Err(StoreError::Corrupt { path: state_dir.clone(), message });
                }
            }
        }
        Ok(states)
    })
    .map_err(|e| init_err.take().unwrap_or_else(|| CliError::from(e)))?;
    let mut videos: BTreeMap<String, VideoInfo> = read_corpus(&produced(cfg.corpus(), "ingest")?)?
        .into_iter()
        .map(|record| (record.video_id.clone(), VideoInfo { record, term_hits: Vec::new() }))
        .collect();
    let hits_path = out.join("term_hits.jsonl");
    if hits_path.exists() {
        for h in read_jsonl::<VideoHits>(&hits_path)? {
            if let Some(v) = videos.get_mut(&h.video_id) {
                v.term_hits = h.hits;
            }
        }
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::data(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let service = Service::start(ServiceConfig { bind, state_dir: state_dir.clone() }, store, videos).await?;
        report("review", &[("listening", service.addr().to_string()), ("state_dir", state_dir.display().to_string())]);
        tokio::signal::ctrl_c().await.map_err(|e| CliError::data(format!("cannot wait for interrupt: {e}")))?;
        service.shutdown().await?;
        Ok::<(), CliError>(())
    })
}
