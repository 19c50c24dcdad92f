use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::frame::{GenderCoding, RegressionFrame};
use super::FairnessError;

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

pub fn z_two_sided(z: f64) -> f64 {
    let dist = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * dist.sf(z.abs())).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
}

/// Pairwise Pearson correlations. Entries involving a constant column are
/// `None`; the diagonal of a non-constant column is `r = 1, p = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub n: usize,
    pub entries: Vec<Vec<Option<Correlation>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<Correlation> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.entries[i][j]
    }
}

/// Pearson r with its t-test p-value (`n - 2` degrees of freedom).
pub fn pearson(x: &[f64], y: &[f64]) -> Option<Correlation> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() >= 1.0 { 0.0 } else { t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df) };
    Some(Correlation { r, p_value })
}

/// FV, Gender, MED, UND and the raw view count.
pub fn frame_columns(frame: &RegressionFrame, coding: GenderCoding) -> Vec<(String, Vec<f64>)> {
    let b = |v: bool| if v { 1.0 } else { 0.0 };
    let col = |f: &dyn Fn(&super::FrameRow) -> f64| frame.rows.iter().map(f).collect::<Vec<f64>>();
    vec![
        ("FV".into(), col(&|r| b(r.fv))),
        ("Gender".into(), col(&|r| coding.value(r.gender).unwrap_or(f64::NAN))),
        ("MED".into(), col(&|r| b(r.med))),
        ("UND".into(), col(&|r| b(r.und))),
        ("viewCount".into(), col(&|r| r.view_count as f64)),
    ]
}

pub fn pearson_matrix(frame: &RegressionFrame, coding: GenderCoding) -> Result<CorrelationMatrix, FairnessError> {
    if frame.len() < 3 {
        return Err(FairnessError::TooFewRows { needed: 3, got: frame.len() });
    }
    let cols = frame_columns(frame, coding);
    let entries = cols.iter().map(|(_, a)| cols.iter().map(|(_, b)| pearson(a, b)).collect()).collect();
    Ok(CorrelationMatrix { names: cols.into_iter().map(|c| c.0).collect(), n: frame.len(), entries })
}
