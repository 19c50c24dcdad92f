use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::frame::{
    age_gender_table, crosstab, split, CrossTab, FunnelReport, GenderCoding, RegressionFrame, SplitDescriptor,
};
use super::glm::{fit_glm, simple_slopes, Family, Formula, GlmFit, SimpleSlope};
use super::lasso::{fit_lasso, fold_assignment, LassoConfig, LassoFit};
use super::parity::{parity_report, Attribute, ParityReport};
use super::stats::{pearson_matrix, CorrelationMatrix};
use super::FairnessError;
use crate::corpus::{AgeBracket, Gender};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub coding: GenderCoding,
    pub family: Family,
    pub lasso: LassoConfig,
    /// Significance level for the hypothesis table.
    pub alpha: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            train_fraction: 0.7,
            seed: 0,
            coding: GenderCoding::MaleIsOne,
            family: Family::Gaussian,
            lasso: LassoConfig::default(),
            alpha: 0.05,
        }
    }
}

/// GLM and lasso fitted on the training part with the same formula.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPair {
    pub label: &'static str,
    pub glm: GlmFit,
    pub glm_test_mse: Option<f64>,
    pub lasso: LassoFit,
    pub lasso_test_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: String,
    pub term: String,
    pub estimate: f64,
    pub p_value: Option<f64>,
    pub supported: bool,
}

/// Which part of the split a row went to, and its cross-validation fold
/// when it is a training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub video_id: String,
    pub train: bool,
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub funnel: FunnelReport,
    pub n: usize,
    pub crosstab: CrossTab,
    pub age_gender: BTreeMap<(AgeBracket, Gender), usize>,
    pub correlations: CorrelationMatrix,
    pub split: SplitDescriptor,
    /// Per frame row, in frame order.
    pub assignment: Vec<SplitAssignment>,
    pub models: Vec<ModelPair>,
    /// FV slopes from the demographic GLM.
    pub slopes: [SimpleSlope; 2],
    pub hypotheses: Vec<Hypothesis>,
    /// Videos high on both axes against the whole frame, per attribute with
    /// at least one known group among them.
    pub parity: Vec<ParityReport>,
    pub alpha: f64,
}

pub fn audit(
    frame: &RegressionFrame,
    funnel: &FunnelReport,
    config: &AuditConfig,
) -> Result<AuditReport, FairnessError> {
    let tab = crosstab(frame)?;
    let correlations = pearson_matrix(frame, config.coding)?;
    let (train, test, split) = split(frame, config.train_fraction, config.seed)?;
    let folds = fold_assignment(train.len(), config.lasso.folds, config.seed);
    let train_fold: BTreeMap<&str, usize> =
        train.rows.iter().zip(&folds).map(|(r, f)| (r.video_id.as_str(), *f)).collect();
    let assignment = frame
        .rows
        .iter()
        .map(|r| {
            let fold = train_fold.get(r.video_id.as_str()).copied();
            SplitAssignment { video_id: r.video_id.clone(), train: fold.is_some(), fold }
        })
        .collect();
    let lasso_config = LassoConfig { seed: config.seed, ..config.lasso.clone() };
    let mut models = Vec::new();
    for (label, formula) in [("demographic", Formula::demographic()), ("with_labels", Formula::with_labels())] {
        let glm = fit_glm(&train, &formula, config.family, config.coding)?;
        let lasso = fit_lasso(&train, &formula, config.coding, &lasso_config)?;
        models.push(ModelPair { label, glm_test_mse: glm.mse(&test), lasso_test_mse: lasso.mse(&test), glm, lasso });
    }
    let slopes = simple_slopes(&models[0].glm)?;
    let hypotheses = [("H1", "FV"), ("H2", "Gender"), ("H3", "FV:Gender")]
        .into_iter()
        .map(|(id, term)| {
            let c = models[0].glm.coefficient(term).expect("demographic terms present");
            Hypothesis {
                id: id.into(),
                term: term.into(),
                estimate: c.estimate,
                p_value: c.p_value,
                supported: c.p_value.is_some_and(|p| p < config.alpha),
            }
        })
        .collect();
    let high: Vec<String> = frame.rows.iter().filter(|r| r.med && r.und).map(|r| r.video_id.clone()).collect();
    let mut parity = Vec::new();
    for attribute in [Attribute::Gender, Attribute::AgeBracket, Attribute::Fv] {
        match parity_report(&high, frame, attribute) {
            Ok(r) => parity.push(r),
            Err(FairnessError::EmptyRecommendation | FairnessError::NoKnownGroup(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(AuditReport {
        funnel: funnel.clone(),
        n: frame.len(),
        crosstab: tab,
        age_gender: age_gender_table(frame),
        correlations,
        split,
        assignment,
        models,
        slopes,
        hypotheses,
        parity,
        alpha: config.alpha,
    })
}

/// Machine-readable number: shortest round-trip form, exponent for very
/// small or large magnitudes, `NA` for undefined values.
pub(crate) fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.001 => "***",
        Some(p) if p < 0.01 => "**",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}

fn b(v: bool) -> u8 {
    u8::from(v)
}

fn gender_str(g: Gender) -> &'static str {
    match g {
        Gender::Female => "female",
        Gender::Male => "male",
        Gender::Unknown => "unknown",
    }
}

pub(crate) fn csv(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Three-decimal estimate without the leading zero, as in printed tables.
fn short(x: f64) -> String {
    let s = format!("{x:.3}");
    s.replacen("0.", ".", 1)
}

impl AuditReport {
    /// `(file name, contents)` for every table.
    pub fn csv_tables(&self) -> Vec<(&'static str, String)> {
        let funnel = csv(&["step", "removed", "remaining"], {
            let mut remaining = self.funnel.total;
            let mut rows = vec![vec!["total".into(), "0".into(), remaining.to_string()]];
            for (e, c) in &self.funnel.excluded {
                remaining -= c;
                rows.push(vec![e.as_str().into(), c.to_string(), remaining.to_string()]);
            }
            rows
        });
        let crosstab = csv(
            &["med", "und", "gender", "fv", "count"],
            self.crosstab
                .cells
                .iter()
                .map(|((m, u, g, f), c)| {
                    vec![b(*m).to_string(), b(*u).to_string(), gender_str(*g).into(), b(*f).to_string(), c.to_string()]
                })
                .collect(),
        );
        let age_gender = csv(
            &["age_bracket", "gender", "count"],
            self.age_gender
                .iter()
                .map(|((a, g), c)| vec![a.as_str().into(), gender_str(*g).into(), c.to_string()])
                .collect(),
        );
        let names = &self.correlations.names;
        let mut corr_rows = Vec::new();
        for (i, a) in names.iter().enumerate() {
            for (j, bname) in names.iter().enumerate() {
                let c = self.correlations.entries[i][j];
                corr_rows.push(vec![a.clone(), bname.clone(), opt(c.map(|c| c.r)), opt(c.map(|c| c.p_value))]);
            }
        }
        let correlations = csv(&["var1", "var2", "r", "p_value"], corr_rows);
        let mut reg_rows = Vec::new();
        let mut path_rows = Vec::new();
        for m in &self.models {
            for c in &m.glm.coefficients {
                reg_rows.push(vec![
                    m.label.into(),
                    "glm".into(),
                    c.name.clone(),
                    num(c.estimate),
                    num(c.std_error),
                    num(c.statistic),
                    opt(c.p_value),
                ]);
            }
            reg_rows.push(vec![
                m.label.into(),
                "lasso".into(),
                "(Intercept)".into(),
                num(m.lasso.intercept),
                "NA".into(),
                "NA".into(),
                "NA".into(),
            ]);
            for (name, c) in m.lasso.names.iter().zip(&m.lasso.coefficients) {
                reg_rows.push(vec![
                    m.label.into(),
                    "lasso".into(),
                    name.clone(),
                    num(*c),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                ]);
            }
            for (k, l) in m.lasso.lambdas.iter().enumerate() {
                let mut row = vec![m.label.to_string(), num(*l), num(m.lasso.cv_mse[k])];
                row.extend(m.lasso.path[k].iter().map(|v| num(*v)));
                path_rows.push(row);
            }
        }
        let regression = csv(&["model", "method", "term", "estimate", "std_error", "statistic", "p_value"], reg_rows);
        let mut path_header = vec!["model", "lambda", "cv_mse"];
        let term_names: Vec<String> = self.models.last().map(|m| m.lasso.names.clone()).unwrap_or_default();
        path_header.extend(term_names.iter().map(String::as_str));
        // Shorter models leave trailing cells empty.
        let width = path_header.len();
        for r in &mut path_rows {
            r.resize(width, String::new());
        }
        let lasso_path = csv(&path_header, path_rows);
        let fit = csv(
            &["model", "method", "n_train", "n_test", "seed", "best_lambda", "test_mse"],
            self.models
                .iter()
                .flat_map(|m| {
                    let common =
                        [self.split.n_train.to_string(), self.split.n_test.to_string(), self.split.seed.to_string()];
                    [
                        [vec![m.label.into(), "glm".into()], common.to_vec(), vec!["NA".into(), opt(m.glm_test_mse)]]
                            .concat(),
                        [
                            vec![m.label.into(), "lasso".into()],
                            common.to_vec(),
                            vec![num(m.lasso.best_lambda), opt(m.lasso_test_mse)],
                        ]
                        .concat(),
                    ]
                })
                .collect(),
        );
        let slopes = csv(
            &["gender", "slope", "std_error", "statistic", "p_value"],
            self.slopes
                .iter()
                .map(|s| vec![num(s.gender_value), num(s.slope), num(s.std_error), num(s.statistic), opt(s.p_value)])
                .collect(),
        );
        let hypotheses = csv(
            &["hypothesis", "term", "estimate", "p_value", "supported"],
            self.hypotheses
                .iter()
                .map(|h| vec![h.id.clone(), h.term.clone(), num(h.estimate), opt(h.p_value), h.supported.to_string()])
                .collect(),
        );
        let parity = parity_csv(&self.parity);
        let assignment = csv(
            &["video_id", "part", "fold"],
            self.assignment
                .iter()
                .map(|a| {
                    let part = if a.train { "train" } else { "test" };
                    vec![a.video_id.clone(), part.into(), a.fold.map_or_else(|| "NA".into(), |f| f.to_string())]
                })
                .collect(),
        );
        vec![
            ("funnel.csv", funnel),
            ("crosstab.csv", crosstab),
            ("age_gender.csv", age_gender),
            ("correlations.csv", correlations),
            ("regression.csv", regression),
            ("model_fit.csv", fit),
            ("lasso_path.csv", lasso_path),
            ("simple_slopes.csv", slopes),
            ("hypotheses.csv", hypotheses),
            ("parity.csv", parity),
            ("split.csv", assignment),
        ]
    }

    /// Human-readable tables.
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Exclusion funnel");
        let _ = writeln!(s, "  {:<14}{:>8}", "total", self.funnel.total);
        for (e, c) in &self.funnel.excluded {
            let _ = writeln!(s, "  {:<14}{:>8}", e.as_str(), c);
        }
        let _ = writeln!(s, "  {:<14}{:>8}\n", "analyzed", self.funnel.analyzed);

        let _ = writeln!(s, "Understandability and medical information by gender (N = {})", self.n);
        let _ =
            writeln!(s, "  {:<10}{:<10}{:>10}{:>10}{:>10}{:>10}", "MED", "UND", "F FV=0", "F FV=1", "M FV=0", "M FV=1");
        for med in [false, true] {
            for und in [false, true] {
                let lvl = |v: bool| if v { "high" } else { "low" };
                let _ = writeln!(
                    s,
                    "  {:<10}{:<10}{:>10}{:>10}{:>10}{:>10}",
                    lvl(med),
                    lvl(und),
                    self.crosstab.get(med, und, Gender::Female, false),
                    self.crosstab.get(med, und, Gender::Female, true),
                    self.crosstab.get(med, und, Gender::Male, false),
                    self.crosstab.get(med, und, Gender::Male, true)
                );
            }
        }
        let _ = writeln!(s);

        let _ = writeln!(s, "Correlation matrix");
        let names = &self.correlations.names;
        let _ = write!(s, "  {:<14}", "");
        for k in 1..=names.len() {
            let _ = write!(s, "{k:>10}");
        }
        let _ = writeln!(s);
        for (i, name) in names.iter().enumerate() {
            let _ = write!(s, "  {:<14}", format!("{}.{}", i + 1, name));
            for j in 0..=i {
                let cell = if i == j {
                    "1".to_string()
                } else {
                    match self.correlations.entries[i][j] {
                        Some(c) => format!("{}{}", short(c.r), stars(Some(c.p_value))),
                        None => "NA".into(),
                    }
                };
                let _ = write!(s, "{cell:>10}");
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s, "  N = {}; *p < 0.05, **p < 0.01, ***p < 0.001, two-tailed\n", self.correlations.n);

        let _ = writeln!(
            s,
            "Regression results (train n = {}, test n = {}, seed {})",
            self.split.n_train, self.split.n_test, self.split.seed
        );
        let _ = write!(s, "  {:<14}", "");
        for _ in &self.models {
            let _ = write!(s, "{:>12}{:>12}", "GLM", "LASSO");
        }
        let _ = writeln!(s);
        let all_terms: Vec<String> = self.models.last().map(|m| m.lasso.names.clone()).unwrap_or_default();
        for (i, term) in all_terms.iter().enumerate() {
            let _ = write!(s, "  {:<14}", format!("{}.{}", i + 1, term));
            for m in &self.models {
                let glm = m.glm.coefficient(term).map(|c| format!("{}{}", short(c.estimate), stars(c.p_value)));
                let lasso = m.lasso.names.iter().position(|n| n == term).map(|j| short(m.lasso.coefficients[j]));
                let _ = write!(s, "{:>12}{:>12}", glm.unwrap_or_default(), lasso.unwrap_or_default());
            }
            let _ = writeln!(s);
        }
        let _ = write!(s, "  {:<14}", "test MSE");
        for m in &self.models {
            let _ = write!(
                s,
                "{:>12}{:>12}",
                m.glm_test_mse.map_or("NA".into(), |v| format!("{v:.3}")),
                m.lasso_test_mse.map_or("NA".into(), |v| format!("{v:.3}"))
            );
        }
        let _ = writeln!(s);
        let lambdas: Vec<String> = self.models.iter().map(|m| format!("{:.4}", m.lasso.best_lambda)).collect();
        let _ = writeln!(s, "  best lambda = {}; lasso coefficients standardized\n", lambdas.join(", "));

        let _ = writeln!(s, "Simple slopes of FV");
        for sl in &self.slopes {
            let _ = writeln!(
                s,
                "  Gender = {}: slope {:.3} (SE {:.3}, p {})",
                sl.gender_value,
                sl.slope,
                sl.std_error,
                sl.p_value.map_or("NA".into(), |p| format!("{p:.4}"))
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Hypotheses (alpha = {})", self.alpha);
        for h in &self.hypotheses {
            let _ = writeln!(
                s,
                "  {} {:<10} estimate {:>8.3}  p {:>8}  {}",
                h.id,
                h.term,
                h.estimate,
                h.p_value.map_or("NA".into(), |p| format!("{p:.4}")),
                if h.supported { "supported" } else { "not supported" }
            );
        }
        let _ = writeln!(s);
        s.push_str(&parity_text(&self.parity));
        s
    }
}

pub(crate) fn parity_csv(reports: &[ParityReport]) -> String {
    csv(
        &["attribute", "group", "population_share", "recommended_share", "ratio"],
        reports
            .iter()
            .flat_map(|r| {
                r.groups.iter().map(|g| {
                    vec![
                        r.attribute.as_str().into(),
                        g.group.clone(),
                        num(g.population_share),
                        num(g.recommended_share),
                        num(g.ratio),
                    ]
                })
            })
            .collect(),
    )
}

pub(crate) fn parity_text(reports: &[ParityReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ =
            writeln!(s, "Parity by {} ({} recommended, {} unknown)", r.attribute.as_str(), r.recommended, r.unknown);
        for g in &r.groups {
            let _ = writeln!(
                s,
                "  {:<10} population {:>6.3}  recommended {:>6.3}  ratio {:>6.3}",
                g.group, g.population_share, g.recommended_share, g.ratio
            );
        }
    }
    s
}

impl ParityReport {
    pub fn csv(&self) -> String {
        parity_csv(std::slice::from_ref(self))
    }

    pub fn text(&self) -> String {
        parity_text(std::slice::from_ref(self))
    }
}
