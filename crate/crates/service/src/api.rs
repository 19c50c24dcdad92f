use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{mpsc, Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;
use vidcurate_core::corpus::{Dimension, VideoRecord};
use vidcurate_core::cotrain::{CoTrainState, HistoryEntry, ReviewItem, RoundReport, StopReason};
use vidcurate_core::textmeasure::TermHit;

use crate::store::{LabelOutcome, LabelSubmission, SessionStore, StoreError};

/// What `/api/videos/{id}` shows for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub record: VideoRecord,
    #[serde(default)]
    pub term_hits: Vec<TermHit>,
}

/// Immutable view published after every write.
#[derive(Debug, Clone, Default)]
pub struct ReadView {
    pub seq: u64,
    pub states: BTreeMap<Dimension, Arc<CoTrainState>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job: String,
    pub dimension: Dimension,
    pub status: JobState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<RoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

type Reply<T> = oneshot::Sender<Result<T, StoreError>>;

enum Command {
    Label(LabelSubmission, Reply<LabelOutcome>),
    Advance(Dimension, Reply<String>),
    Shutdown(oneshot::Sender<Result<(), StoreError>>),
    /// Exit without a snapshot.
    Abort,
}

#[derive(Clone)]
struct AppState {
    view: Arc<RwLock<Arc<ReadView>>>,
    jobs: Arc<Mutex<BTreeMap<String, JobStatus>>>,
    videos: Arc<BTreeMap<String, VideoInfo>>,
    tx: mpsc::Sender<Command>,
}

impl AppState {
    fn view(&self) -> Arc<ReadView> {
        self.view.read().expect("view lock").clone()
    }
}

fn publish(view: &RwLock<Arc<ReadView>>, store: &SessionStore, changed: Option<Dimension>) {
    let mut next = (**view.read().expect("view lock")).clone();
    next.seq = store.seq();
    for (d, s) in store.states() {
        if changed.is_none_or(|c| c == *d) {
            next.states.insert(*d, Arc::new(s.clone()));
        }
    }
    *view.write().expect("view lock") = Arc::new(next);
}

/// The single writer: applies commands in arrival order.
fn applier(
    mut store: SessionStore,
    rx: mpsc::Receiver<Command>,
    view: Arc<RwLock<Arc<ReadView>>>,
    jobs: Arc<Mutex<BTreeMap<String, JobStatus>>>,
) {
    while let Ok(cmd) = rx.recv() {
        match cmd {
            Command::Label(sub, reply) => {
                let res = store.submit_label(&sub);
                if matches!(res, Ok(LabelOutcome::Applied)) {
                    publish(&view, &store, Some(sub.dimension));
                }
                let _ = reply.send(res);
            }
            Command::Advance(dimension, reply) => {
                if let Err(e) = store.check_advance(dimension) {
                    let _ = reply.send(Err(e));
                    continue;
                }
                let job = store.next_job_id();
                jobs.lock().expect("jobs lock").insert(
                    job.clone(),
                    JobStatus { job: job.clone(), dimension, status: JobState::Running, report: None, error: None },
                );
                let _ = reply.send(Ok(job.clone()));
                let res = store.advance_round(dimension, &job);
                publish(&view, &store, Some(dimension));
                let mut jobs = jobs.lock().expect("jobs lock");
                let entry = jobs.get_mut(&job).expect("job registered");
                match res {
                    Ok(report) => {
                        entry.status = JobState::Done;
                        entry.report = Some(report);
                    }
                    Err(e) => {
                        tracing::error!(job = %job, error = %e, "round failed");
                        entry.status = JobState::Failed;
                        entry.error = Some(e.to_string());
                    }
                }
            }
            Command::Shutdown(reply) => {
                let _ = reply.send(store.snapshot());
                return;
            }
            Command::Abort => return,
        }
    }
    // Every sender dropped without a shutdown command: exit like a crash,
    // leaving recovery to the event log.
}

#[derive(Debug, Deserialize)]
struct DimQuery {
    dimension: Option<String>,
}

fn error(status: StatusCode, body: serde_json::Value) -> Response {
    (status, Json(body)).into_response()
}

#[allow(clippy::result_large_err)]
fn parse_dim(q: &DimQuery) -> Result<Dimension, Response> {
    let raw = q.dimension.as_deref().ok_or_else(|| {
        error(StatusCode::BAD_REQUEST, json!({"error": "bad_request", "message": "dimension is required"}))
    })?;
    raw.parse().map_err(|m: String| error(StatusCode::BAD_REQUEST, json!({"error": "bad_request", "message": m})))
}

fn store_error(e: StoreError) -> Response {
    match e {
        StoreError::NotFound { .. } | StoreError::UnknownDimension(_) => {
            error(StatusCode::NOT_FOUND, json!({"error": "not_found", "message": e.to_string()}))
        }
        StoreError::Conflict { ref reason, ref current } => {
            error(StatusCode::CONFLICT, json!({"error": "conflict", "message": reason, "item": current}))
        }
        StoreError::Pending { ref pending, .. } => {
            error(StatusCode::CONFLICT, json!({"error": "pending", "message": e.to_string(), "pending": pending}))
        }
        StoreError::Stopped { ref reasons, .. } => {
            error(StatusCode::CONFLICT, json!({"error": "stopped", "message": e.to_string(), "reasons": reasons}))
        }
        _ => error(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "internal", "message": e.to_string()})),
    }
}

fn unavailable() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, json!({"error": "unavailable", "message": "service is shutting down"}))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueueEntry {
    pub video_id: String,
    pub title: String,
    pub excerpt: String,
    pub term_hits: Vec<TermHit>,
    pub f1_proba: f64,
    pub f2_proba: f64,
    pub created_round: u32,
    pub revision: u64,
}

const EXCERPT_CHARS: usize = 200;

fn queue_entry(item: &ReviewItem, videos: &BTreeMap<String, VideoInfo>) -> QueueEntry {
    let info = videos.get(&item.video_id);
    QueueEntry {
        video_id: item.video_id.clone(),
        title: info.map(|v| v.record.title.clone()).unwrap_or_default(),
        excerpt: info.map(|v| v.record.description.chars().take(EXCERPT_CHARS).collect()).unwrap_or_default(),
        term_hits: info.map(|v| v.term_hits.clone()).unwrap_or_default(),
        f1_proba: item.f1_proba,
        f2_proba: item.f2_proba,
        created_round: item.created_round,
        revision: item.revision,
    }
}

async fn get_queue(State(app): State<AppState>, Query(q): Query<DimQuery>) -> Response {
    let dim = match parse_dim(&q) {
        Ok(d) => d,
        Err(r) => return r,
    };
    let view = app.view();
    let Some(state) = view.states.get(&dim) else {
        return store_error(StoreError::UnknownDimension(dim));
    };
    let mut items: Vec<&ReviewItem> = state.pending().collect();
    items.sort_by(|a, b| a.created_round.cmp(&b.created_round).then(a.video_id.cmp(&b.video_id)));
    let items: Vec<QueueEntry> = items.into_iter().map(|i| queue_entry(i, &app.videos)).collect();
    Json(json!({"dimension": dim, "round": state.round, "items": items})).into_response()
}

async fn post_label(State(app): State<AppState>, Json(sub): Json<LabelSubmission>) -> Response {
    let (tx, rx) = oneshot::channel();
    if app.tx.send(Command::Label(sub.clone(), tx)).is_err() {
        return unavailable();
    }
    match rx.await {
        Ok(Ok(outcome)) => {
            let view = app.view();
            let item = view.states.get(&sub.dimension).and_then(|s| s.review_item(&sub.video_id).cloned());
            Json(json!({"status": outcome, "item": item})).into_response()
        }
        Ok(Err(e)) => store_error(e),
        Err(_) => unavailable(),
    }
}

async fn post_advance(State(app): State<AppState>, Query(q): Query<DimQuery>) -> Response {
    let dim = match parse_dim(&q) {
        Ok(d) => d,
        Err(r) => return r,
    };
    let (tx, rx) = oneshot::channel();
    if app.tx.send(Command::Advance(dim, tx)).is_err() {
        return unavailable();
    }
    match rx.await {
        Ok(Ok(job)) => (StatusCode::ACCEPTED, Json(json!({"job": job, "dimension": dim}))).into_response(),
        Ok(Err(e)) => store_error(e),
        Err(_) => unavailable(),
    }
}

async fn get_job(State(app): State<AppState>, Path(job): Path<String>) -> Response {
    match app.jobs.lock().expect("jobs lock").get(&job) {
        Some(s) => Json(s.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, json!({"error": "not_found", "message": format!("no job {job:?}")})),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Stats {
    pub dimension: Dimension,
    pub round: u32,
    pub labeled: usize,
    pub unlabeled: usize,
    pub queue_depth: usize,
    pub discarded: usize,
    pub history: Vec<HistoryEntry>,
    pub should_stop: bool,
    pub stop_reasons: Vec<StopReason>,
    pub seq: u64,
}

async fn get_stats(State(app): State<AppState>, Query(q): Query<DimQuery>) -> Response {
    let dim = match parse_dim(&q) {
        Ok(d) => d,
        Err(r) => return r,
    };
    let view = app.view();
    let Some(state) = view.states.get(&dim) else {
        return store_error(StoreError::UnknownDimension(dim));
    };
    let stop = state.should_stop();
    Json(Stats {
        dimension: dim,
        round: state.round,
        labeled: state.labeled.len(),
        unlabeled: state.unlabeled.len(),
        queue_depth: state.pending().count(),
        discarded: state.discarded.len(),
        history: state.history.clone(),
        should_stop: stop.stop,
        stop_reasons: stop.reasons,
        seq: view.seq,
    })
    .into_response()
}

async fn get_video(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    match app.videos.get(&id) {
        Some(v) => Json(v).into_response(),
        None => error(StatusCode::NOT_FOUND, json!({"error": "not_found", "message": format!("no video {id:?}")})),
    }
}

/// A running service.
pub struct Service {
    addr: SocketAddr,
    tx: mpsc::Sender<Command>,
    shutdown: Option<oneshot::Sender<()>>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
    applier: Option<JoinHandle<()>>,
}

pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub state_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: SocketAddr, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("server failed: {0}")]
    Server(String),
}

fn router(store: SessionStore, videos: BTreeMap<String, VideoInfo>) -> (Router, mpsc::Sender<Command>, JoinHandle<()>) {
    let view = Arc::new(RwLock::new(Arc::new(ReadView::default())));
    publish(&view, &store, None);
    let jobs = Arc::new(Mutex::new(BTreeMap::new()));
    let (tx, rx) = mpsc::channel();
    let handle = {
        let (view, jobs) = (view.clone(), jobs.clone());
        std::thread::Builder::new()
            .name("vidcurate-applier".into())
            .spawn(move || applier(store, rx, view, jobs))
            .expect("spawn applier")
    };
    let state = AppState { view, jobs, videos: Arc::new(videos), tx: tx.clone() };
    let app = Router::new()
        .route("/api/queue", get(get_queue))
        .route("/api/labels", post(post_label))
        .route("/api/rounds/advance", post(post_advance))
        .route("/api/rounds/status/{job}", get(get_job))
        .route("/api/stats", get(get_stats))
        .route("/api/videos/{id}", get(get_video))
        .with_state(state);
    (app, tx, handle)
}

impl Service {
    /// Binds and starts serving; must be called inside a tokio runtime.
    pub async fn start(
        config: ServiceConfig,
        store: SessionStore,
        videos: BTreeMap<String, VideoInfo>,
    ) -> Result<Service, ServeError> {
        let listener = tokio::net::TcpListener::bind(config.bind)
            .await
            .map_err(|e| ServeError::Bind { addr: config.bind, message: e.to_string() })?;
        let addr = listener.local_addr().map_err(|e| ServeError::Server(e.to_string()))?;
        let (app, tx, applier) = router(store, videos);
        let (shutdown, signal) = oneshot::channel::<()>();
        let server = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = signal.await;
                })
                .await
        });
        tracing::info!(%addr, "review service listening");
        Ok(Service { addr, tx, shutdown: Some(shutdown), server, applier: Some(applier) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting requests, finishes in-flight ones and writes a
    /// snapshot.
    pub async fn shutdown(mut self) -> Result<(), ServeError> {
        if let Some(s) = self.shutdown.take() {
            let _ = s.send(());
        }
        (&mut self.server)
            .await
            .map_err(|e| ServeError::Server(e.to_string()))?
            .map_err(|e| ServeError::Server(e.to_string()))?;
        let (tx, rx) = oneshot::channel();
        if self.tx.send(Command::Shutdown(tx)).is_ok() {
            rx.await.map_err(|e| ServeError::Server(e.to_string()))??;
        }
        if let Some(h) = self.applier.take() {
            let _ = tokio::task::spawn_blocking(move || h.join()).await;
        }
        Ok(())
    }

    /// Stops serving without writing a snapshot, as a crash would. Events
    /// already acknowledged are in the log.
    pub async fn abort(mut self) {
        self.server.abort();
        let _ = (&mut self.server).await;
        let _ = self.tx.send(Command::Abort);
        if let Some(h) = self.applier.take() {
            let _ = tokio::task::spawn_blocking(move || h.join()).await;
        }
    }
}
