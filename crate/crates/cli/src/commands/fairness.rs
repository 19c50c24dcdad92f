use std::collections::BTreeMap;
use std::path::PathBuf;

use vidcurate_core::corpus::{read_annotations, read_corpus, read_labels, summarize};
use vidcurate_core::fairness::{
    audit as run_audit, build_frame, population_shares, recommend as rerank, AuditConfig, FairnessConfig, FunnelReport,
    LassoConfig, RegressionFrame,
};

use super::{num, report, write};
use crate::config::{existing, produced, PipelineConfig};
use crate::error::CliError;

fn frame(cfg: &PipelineConfig, labels: Option<PathBuf>) -> Result<(RegressionFrame, FunnelReport, PathBuf), CliError> {
    let corpus_path = cfg.corpus();
    let corpus = read_corpus(&produced(corpus_path, "ingest")?)?;
    let labels_path = match labels {
        Some(p) => existing(Some(&p), "labels", "--labels")?,
        None => produced(cfg.out().join("labels.jsonl"), "cotrain run")?,
    };
    let labels = read_labels(&labels_path)?;
    let annotations = read_annotations(&existing(cfg.paths.annotations.as_ref(), "annotations", "--annotations")?)?;
    let summary = summarize(&corpus, &labels)?;
    let dir = cfg.out().join("fairness");
    write(&dir.join("summary.csv"), &summary.to_csv())?;
    write(&dir.join("summary.txt"), &summary.to_text())?;
    let (frame, funnel) = build_frame(&corpus, &labels, &annotations)?;
    Ok((frame, funnel, dir))
}

pub fn audit(cfg: &PipelineConfig, labels: Option<PathBuf>) -> Result<(), CliError> {
    let seed = cfg.seed("fairness audit")?;
    let f = &cfg.fairness;
    let (frame, funnel, dir) = frame(cfg, labels)?;
    let config = AuditConfig {
        train_fraction: f.train_fraction,
        seed,
        coding: f.gender_coding,
        family: f.family,
        lasso: LassoConfig { lambdas: f.lambda_grid.clone(), folds: f.cv_folds, seed, ..LassoConfig::default() },
        alpha: f.alpha,
    };
    let r = run_audit(&frame, &funnel, &config)?;
    for (name, contents) in r.csv_tables() {
        write(&dir.join(name), &contents)?;
    }
    write(&dir.join("report.txt"), &r.text())?;
    let supported = r.hypotheses.iter().filter(|h| h.supported).count();
    report(
        "fairness-audit",
        &[
            ("total", funnel.total.to_string()),
            ("analyzed", r.n.to_string()),
            ("train", r.split.n_train.to_string()),
            ("test", r.split.n_test.to_string()),
            ("supported", format!("{supported}/{}", r.hypotheses.len())),
        ],
    );
    Ok(())
}

fn read_scores(path: &PathBuf) -> Result<BTreeMap<String, (f64, f64)>, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<(String, f64, f64)>() {
        let (id, med, und) = row?;
        if out.insert(id.clone(), (med, und)).is_some() {
            return Err(CliError::data(format!("{}: {id} scored twice", path.display())));
        }
    }
    Ok(out)
}

pub fn recommend(cfg: &PipelineConfig, labels: Option<PathBuf>, scores: Option<PathBuf>) -> Result<(), CliError> {
    let f = &cfg.fairness;
    if f.delta.is_nan() || f.delta < 0.0 {
        return Err(CliError::usage(format!("delta must be non-negative, got {}", f.delta)));
    }
    let scores_path = match scores {
        Some(p) => existing(Some(&p), "scores", "--scores")?,
        None => produced(cfg.out().join("scores.csv"), "cotrain run")?,
    };
    let scores = read_scores(&scores_path)?;
    let (frame, _, _) = frame(cfg, labels)?;
    let config = FairnessConfig { attribute: f.attribute, delta: f.delta };
    let rec = rerank(&frame, &scores, config, f.top_k)?;
    let shares = population_shares(&frame, f.attribute);
    let dir = cfg.out().join("recommend");
    write(&dir.join("recommendations.csv"), &rec.csv(&shares))?;
    write(&dir.join("recommendations.txt"), &rec.text())?;
    report(
        "recommend",
        &[
            ("attribute", f.attribute.as_str().to_string()),
            ("delta", num(f.delta)),
            ("candidates", rec.candidates.to_string()),
            ("ranked", rec.ranked.len().to_string()),
            ("violations", rec.violations().to_string()),
        ],
    );
    Ok(())
}
