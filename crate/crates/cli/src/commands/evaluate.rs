use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use vidcurate_core::corpus::{read_labels, Dimension, LabelSource, Level};
use vidcurate_core::cotrain::{read_checkpoint, CoTrainState};
use vidcurate_core::features::ViewPair;
use vidcurate_core::learners::{evaluate, ClassMetrics, EvalReport};

use super::{csv_string, dimensions, num, opt, report, write};
use crate::commands::cotrain::dim_dir;
use crate::config::{existing, produced, PipelineConfig};
use crate::error::CliError;

/// Videos to score: the held-out seed labels, or every gold-labeled video
/// that no human labeled for this engine. Held-out seeds are human labels
/// too, and the stopping rule has seen them.
fn eval_set<'a>(
    state: &'a CoTrainState,
    gold: Option<&BTreeMap<String, Level>>,
) -> Result<Vec<(&'a ViewPair, Level)>, CliError> {
    let Some(gold) = gold else {
        return Ok(state.validation.iter().map(|v| (&v.views, v.label)).collect());
    };
    let held_out: BTreeSet<&str> = state.validation.iter().map(|v| v.views.video_id.as_str()).collect();
    let mut out = Vec::new();
    for (id, level) in gold {
        let human = state.labeled.get(id).is_some_and(|e| e.source == LabelSource::Human);
        if human || held_out.contains(id.as_str()) {
            continue;
        }
        if let Some(v) = state.views.get(id) {
            out.push((v, *level));
        }
    }
    Ok(out)
}

fn class_rows(name: &str, m: &ClassMetrics, out: &mut String) {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.1}%", 100.0 * x));
    let _ =
        writeln!(out, "{name:<8}{:>12}{:>12}{:>12}{:>10}", cell(m.precision), cell(m.recall), cell(m.f1), m.support);
}

fn text(d: Dimension, set: &str, r: &EvalReport, n: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{d} classifier ({set}, n = {n}, threshold {})", r.threshold);
    let _ = writeln!(out, "{:<8}{:>12}{:>12}{:>12}{:>10}", "", "Precision", "Recall", "F1", "Support");
    class_rows("High", &r.positive, &mut out);
    class_rows("Low", &r.negative, &mut out);
    let _ = writeln!(out, "Overall accuracy: {:.1}%", 100.0 * r.accuracy);
    let _ = writeln!(out, "AUC: {}", r.auc.map_or_else(|| "undefined".into(), |a| format!("{a:.3}")));
    out
}

pub fn run(cfg: &PipelineConfig, only: Option<Dimension>) -> Result<(), CliError> {
    let gold = match &cfg.paths.gold {
        Some(_) => Some(read_labels(&existing(cfg.paths.gold.as_ref(), "gold labels", "--gold")?)?),
        None => None,
    };
    let dir = cfg.out().join("evaluation");
    let mut txt = String::new();
    for d in dimensions(only) {
        let state = read_checkpoint(&produced(dim_dir(cfg, d).join("state.json"), "cotrain run")?)?;
        let gold_d: Option<BTreeMap<String, Level>> = gold
            .as_ref()
            .map(|g| g.iter().filter_map(|s| s.axis(d).level().map(|l| (s.video_id.clone(), l))).collect());
        let set = eval_set(&state, gold_d.as_ref())?;
        if set.is_empty() {
            return Err(CliError::data(format!("no {d} videos to evaluate")));
        }
        let scores = set.iter().map(|(v, _)| state.ensemble_proba(v)).collect::<Result<Vec<_>, _>>()?;
        let y: Vec<bool> = set.iter().map(|(_, l)| l.is_high()).collect();
        let r = evaluate(&scores, &y, state.config.threshold)?;
        let set_name = if gold.is_some() { "gold labels" } else { "held-out seed labels" };
        let m = |c: &ClassMetrics, prefix: &str| {
            vec![
                vec![format!("{prefix}_support"), c.support.to_string()],
                vec![format!("{prefix}_precision"), opt(c.precision)],
                vec![format!("{prefix}_recall"), opt(c.recall)],
                vec![format!("{prefix}_f1"), opt(c.f1)],
            ]
        };
        let mut rows = vec![vec!["n".to_string(), set.len().to_string()], vec!["threshold".into(), num(r.threshold)]];
        rows.extend(m(&r.positive, "high"));
        rows.extend(m(&r.negative, "low"));
        rows.push(vec!["accuracy".into(), num(r.accuracy)]);
        rows.push(vec!["macro_f1".into(), opt(r.macro_f1())]);
        rows.push(vec!["auc".into(), opt(r.auc)]);
        write(&dir.join(format!("{d}.csv")), &csv_string(&["metric", "value"], &rows)?)?;
        let roc: Vec<Vec<String>> = r.roc_points.iter().map(|(f, t)| vec![num(*f), num(*t)]).collect();
        write(&dir.join(format!("roc_{d}.csv")), &csv_string(&["fpr", "tpr"], &roc)?)?;
        txt.push_str(&text(d, set_name, &r, set.len()));
        txt.push('\n');
        report(
            "evaluate",
            &[
                ("dimension", d.to_string()),
                ("n", set.len().to_string()),
                ("accuracy", num(r.accuracy)),
                ("auc", opt(r.auc)),
            ],
        );
    }
    write(&dir.join("report.txt"), &txt)
}
