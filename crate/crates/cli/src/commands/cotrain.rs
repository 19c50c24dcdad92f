use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vidcurate_core::corpus::{read_labels, Dimension, LabelSet, LabelSource, Level};
use vidcurate_core::cotrain::{
    init_state, read_checkpoint, run as run_loop, write_checkpoint, CoTrainState, FnResolver, Resolver, ResolverError,
    RunOptions, RunOutcome, TranscriptResolver,
};
use vidcurate_core::features::{read_views, ViewPair};
use vidcurate_core::io::{read_jsonl, write_jsonl};
use vidcurate_service::store::SNAPSHOT_FILE;
use vidcurate_service::SessionStore;

use super::{csv_string, dimensions, ensure_dir, opt, report, write};
use crate::config::{existing, produced, PipelineConfig};
use crate::error::CliError;

pub fn dim_dir(cfg: &PipelineConfig, dimension: Dimension) -> PathBuf {
    cfg.out().join("cotrain").join(dimension.as_str())
}

fn options(dir: &Path) -> RunOptions {
    RunOptions { checkpoint_dir: Some(dir.join("checkpoints")), audit_log: Some(dir.join("audit.jsonl")) }
}

/// Holds out `fraction` of each class, rounded down, leaving at least one
/// training example per class.
fn hold_out(ids: &BTreeMap<String, Level>, fraction: f64, seed: u64) -> BTreeMap<String, bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = BTreeMap::new();
    for level in [Level::Low, Level::High] {
        let mut class: Vec<&String> = ids.iter().filter(|(_, l)| **l == level).map(|(id, _)| id).collect();
        class.shuffle(&mut rng);
        let n_val = ((fraction * class.len() as f64).floor() as usize).min(class.len().saturating_sub(1));
        for (i, id) in class.into_iter().enumerate() {
            held.insert(id.clone(), i < n_val);
        }
    }
    held
}

/// Fresh engine state from the seed labels and the feature views.
pub fn initial_state(cfg: &PipelineConfig, dimension: Dimension) -> Result<CoTrainState, CliError> {
    let seed = cfg.seed("co-training")?;
    let f = cfg.cotrain.validation_fraction;
    if !(0.0..1.0).contains(&f) {
        return Err(CliError::usage(format!("validation_fraction must lie in [0, 1), got {f}")));
    }
    let out = cfg.out();
    let views = read_views(&produced(out.join("views.jsonl"), "featurize")?)?;
    let seeds = read_labels(&produced(out.join("seed_labels.jsonl"), "measure")?)?;
    let mut levels = BTreeMap::new();
    for set in &seeds {
        if let Some(level) = set.axis(dimension).level() {
            if levels.insert(set.video_id.clone(), level).is_some_and(|prev| prev != level) {
                return Err(CliError::data(format!("conflicting seed labels for {}", set.video_id)));
            }
        }
    }
    let known: BTreeMap<&str, &ViewPair> = views.iter().map(|v| (v.video_id.as_str(), v)).collect();
    if let Some(id) = levels.keys().find(|id| !known.contains_key(id.as_str())) {
        return Err(CliError::data(format!("seed label for {id:?}, which has no views")));
    }
    let held = hold_out(&levels, f, seed);
    let (mut labeled, mut validation, mut unlabeled) = (Vec::new(), Vec::new(), Vec::new());
    for v in views {
        match levels.get(&v.video_id) {
            Some(&level) if held[&v.video_id] => validation.push((v, level)),
            Some(&level) => labeled.push((v, level)),
            None => unlabeled.push(v),
        }
    }
    Ok(init_state(labeled, unlabeled, validation, cfg.cotrain.config(dimension, seed))?)
}

fn resolver(cfg: &PipelineConfig) -> Result<Box<dyn Resolver>, CliError> {
    Ok(match &cfg.paths.resolver {
        Some(_) => Box::new(TranscriptResolver::load(&existing(
            cfg.paths.resolver.as_ref(),
            "resolver transcript",
            "--resolver",
        )?)?),
        None => Box::new(FnResolver(|_: &_| {
            Err(ResolverError(
                "no resolver transcript; answer the queue with `vidcurate review serve` or pass --resolver".into(),
            ))
        })),
    })
}

pub fn run(cfg: &PipelineConfig, only: Option<Dimension>) -> Result<(), CliError> {
    let mut resolver = resolver(cfg)?;
    for dimension in dimensions(only) {
        let dir = dim_dir(cfg, dimension);
        if dir.exists() {
            std::fs::remove_dir_all(&dir)
                .map_err(|e| CliError::data(format!("cannot clear {}: {e}", dir.display())))?;
        }
        ensure_dir(&dir)?;
        let mut state = initial_state(cfg, dimension)?;
        ensure_dir(&dir.join("checkpoints"))?;
        write_checkpoint(&dir.join("checkpoints").join("round-0000.json"), &state)?;
        let outcome = run_loop(&mut state, resolver.as_mut(), &options(&dir))?;
        finish(cfg, dimension, &state, &outcome)?;
    }
    merge_outputs(cfg)
}

pub fn resume(cfg: &PipelineConfig, only: Option<Dimension>, from: Option<PathBuf>) -> Result<(), CliError> {
    let mut states: Vec<CoTrainState> = Vec::new();
    match from {
        Some(path) if path.is_dir() => {
            if !path.join(SNAPSHOT_FILE).exists() {
                return Err(CliError::data(format!("{} holds no review-service state", path.display())));
            }
            let store = SessionStore::open(&path, || Ok(BTreeMap::new()))?;
            for d in dimensions(only) {
                if let Some(s) = store.states().get(&d) {
                    states.push(s.clone());
                }
            }
        }
        Some(path) => {
            let state = read_checkpoint(&produced(path, "cotrain run")?)?;
            if only.is_some_and(|d| d != state.config.target) {
                return Err(CliError::usage("--dimension does not match the checkpoint"));
            }
            states.push(state);
        }
        None => {
            for d in dimensions(only) {
                let path = dim_dir(cfg, d).join("checkpoints").join("resume.json");
                if path.exists() {
                    states.push(read_checkpoint(&path)?);
                }
            }
        }
    }
    if states.is_empty() {
        return Err(CliError::data("nothing to resume"));
    }
    let mut resolver = resolver(cfg)?;
    for mut state in states {
        let dimension = state.config.target;
        let dir = dim_dir(cfg, dimension);
        ensure_dir(&dir.join("checkpoints"))?;
        let outcome = run_loop(&mut state, resolver.as_mut(), &options(&dir))?;
        let resume = dir.join("checkpoints").join("resume.json");
        if resume.exists() {
            std::fs::remove_file(&resume)
                .map_err(|e| CliError::data(format!("cannot remove {}: {e}", resume.display())))?;
        }
        finish(cfg, dimension, &state, &outcome)?;
    }
    merge_outputs(cfg)
}

/// Final labels of one engine: its labeled set plus the held-out seed labels,
/// which are human labels too.
fn final_labels(state: &CoTrainState) -> Vec<LabelSet> {
    let dimension = state.config.target;
    let mut labels = state.label_sets();
    labels.extend(
        state
            .validation
            .iter()
            .map(|v| LabelSet::single(&v.views.video_id, dimension, v.label, LabelSource::Human, None)),
    );
    labels.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    labels
}

fn finish(
    cfg: &PipelineConfig,
    dimension: Dimension,
    state: &CoTrainState,
    outcome: &RunOutcome,
) -> Result<(), CliError> {
    let dir = dim_dir(cfg, dimension);
    write(&dir.join("state.json"), &serde_json::to_string(state)?)?;
    write_jsonl(&dir.join("labels.jsonl"), &final_labels(state))?;
    let rows: Vec<Vec<String>> = state
        .history
        .iter()
        .map(|h| {
            let v = h.validation.as_ref();
            vec![
                h.round.to_string(),
                h.labeled.to_string(),
                h.unlabeled.to_string(),
                h.pending.to_string(),
                opt(v.and_then(|r| r.macro_f1())),
                opt(v.map(|r| r.accuracy)),
                opt(v.and_then(|r| r.auc)),
            ]
        })
        .collect();
    let header = ["round", "labeled", "unlabeled", "pending", "val_macro_f1", "val_accuracy", "val_auc"];
    write(&dir.join("history.csv"), &csv_string(&header, &rows)?)?;
    let count = |src: LabelSource| state.labeled.values().filter(|e| e.source == src).count();
    let reasons: Vec<String> = outcome
        .stop
        .reasons
        .iter()
        .map(|r| serde_json::to_value(r).map(|v| v.as_str().unwrap_or_default().to_string()))
        .collect::<Result<_, _>>()?;
    let summary = vec![
        vec!["rounds".into(), state.round.to_string()],
        vec!["human".into(), count(LabelSource::Human).to_string()],
        vec!["auto".into(), count(LabelSource::AutoCotrain).to_string()],
        vec!["held_out".into(), state.validation.len().to_string()],
        vec!["reviewed".into(), state.review_queue.len().to_string()],
        vec!["discarded".into(), state.discarded.len().to_string()],
        vec!["stop".into(), reasons.join("+")],
    ];
    write(&dir.join("summary.csv"), &csv_string(&["quantity", "value"], &summary)?)?;
    report(
        "cotrain",
        &[
            ("dimension", dimension.to_string()),
            ("rounds", state.round.to_string()),
            ("labeled", state.labeled.len().to_string()),
            ("discarded", state.discarded.len().to_string()),
            ("stop", reasons.join("+")),
        ],
    );
    Ok(())
}

/// `labels.jsonl` and `scores.csv` from whichever engines have finished.
fn merge_outputs(cfg: &PipelineConfig) -> Result<(), CliError> {
    let out = cfg.out();
    let mut labels: Vec<LabelSet> = Vec::new();
    let mut states = BTreeMap::new();
    for d in Dimension::ALL {
        let dir = dim_dir(cfg, d);
        if dir.join("labels.jsonl").exists() && dir.join("state.json").exists() {
            labels.extend(read_jsonl::<LabelSet>(&dir.join("labels.jsonl"))?);
            states.insert(d, read_checkpoint(&dir.join("state.json"))?);
        }
    }
    write_jsonl(&out.join("labels.jsonl"), &labels)?;
    let views = read_views(&produced(out.join("views.jsonl"), "featurize")?)?;
    let mut rows = Vec::with_capacity(views.len());
    for v in &views {
        let mut row = vec![v.video_id.clone()];
        for d in Dimension::ALL {
            row.push(match states.get(&d) {
                Some(s) => opt(Some(s.ensemble_proba(v)?)),
                None => "NA".into(),
            });
        }
        rows.push(row);
    }
    write(&out.join("scores.csv"), &csv_string(&["video_id", "med_score", "und_score"], &rows)?)?;
    Ok(())
}
