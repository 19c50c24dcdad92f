use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::frame::{FrameRow, GenderCoding, RegressionFrame};
use super::stats::{t_two_sided, z_two_sided};
use super::FairnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Fv,
    Gender,
    FvGender,
    Med,
    Und,
}

impl Term {
    pub fn name(self) -> &'static str {
        match self {
            Term::Intercept => "(Intercept)",
            Term::Fv => "FV",
            Term::Gender => "Gender",
            Term::FvGender => "FV:Gender",
            Term::Med => "MED",
            Term::Und => "UND",
        }
    }

    fn value(self, row: &FrameRow, coding: GenderCoding) -> f64 {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        let g = || coding.value(row.gender).unwrap_or(f64::NAN);
        match self {
            Term::Intercept => 1.0,
            Term::Fv => b(row.fv),
            Term::Gender => g(),
            Term::FvGender => b(row.fv) * g(),
            Term::Med => b(row.med),
            Term::Und => b(row.und),
        }
    }
}

impl FromStr for Term {
    type Err = FairnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        [Term::Intercept, Term::Fv, Term::Gender, Term::FvGender, Term::Med, Term::Und]
            .into_iter()
            .find(|term| term.name().eq_ignore_ascii_case(t) || (t == "1" && *term == Term::Intercept))
            .or_else(|| (t.eq_ignore_ascii_case("Gender:FV")).then_some(Term::FvGender))
            .ok_or_else(|| FairnessError::InvalidParameter(format!("unknown model term {t:?}")))
    }
}

/// Right-hand side of a model; the response is always `ln(viewCount)` for
/// the Gaussian family and `viewCount` for the Poisson family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formula {
    pub terms: Vec<Term>,
}

impl Formula {
    /// `FV + Gender + FV:Gender`.
    pub fn demographic() -> Formula {
        Formula { terms: vec![Term::Intercept, Term::Fv, Term::Gender, Term::FvGender] }
    }

    /// The demographic terms plus `MED + UND`.
    pub fn with_labels() -> Formula {
        let mut f = Formula::demographic();
        f.terms.extend([Term::Med, Term::Und]);
        f
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name().to_string()).collect()
    }

    pub fn design(&self, rows: &[FrameRow], coding: GenderCoding) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.terms.len(), |i, j| self.terms[j].value(&rows[i], coding))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rhs: Vec<&str> = self.terms.iter().filter(|t| **t != Term::Intercept).map(|t| t.name()).collect();
        write!(f, "y ~ {}", if rhs.is_empty() { "1".to_string() } else { rhs.join(" + ") })?;
        if !self.terms.contains(&Term::Intercept) {
            write!(f, " - 1")?;
        }
        Ok(())
    }
}

/// Parses `y ~ FV + Gender + FV:Gender`. `FV*Gender` expands to the main
/// effects and the interaction; `- 1` drops the intercept.
impl FromStr for Formula {
    type Err = FairnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rhs = s.split_once('~').map_or(s, |(_, r)| r);
        let mut terms = vec![Term::Intercept];
        let push = |t: Term, terms: &mut Vec<Term>| {
            if !terms.contains(&t) {
                terms.push(t);
            }
        };
        for part in rhs.split('+') {
            let part = part.trim();
            if part.is_empty() {
                return Err(FairnessError::InvalidParameter(format!("empty term in formula {s:?}")));
            }
            let (part, no_intercept) = match part.split_once('-') {
                Some((a, b)) if b.trim() == "1" => (a.trim(), true),
                Some(_) => return Err(FairnessError::InvalidParameter(format!("unsupported formula {s:?}"))),
                None => (part, false),
            };
            if let Some((a, b)) = part.split_once('*') {
                let (a, b): (Term, Term) = (a.parse()?, b.parse()?);
                push(a, &mut terms);
                push(b, &mut terms);
                let pair = [a, b];
                if pair.contains(&Term::Fv) && pair.contains(&Term::Gender) {
                    push(Term::FvGender, &mut terms);
                } else {
                    return Err(FairnessError::InvalidParameter(format!("unsupported interaction {part:?}")));
                }
            } else if !part.is_empty() {
                let t: Term = part.parse()?;
                push(t, &mut terms);
            }
            if no_intercept {
                terms.retain(|t| *t != Term::Intercept);
            }
        }
        Ok(Formula { terms })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Least squares on `ln(viewCount)`; t-tests.
    #[default]
    Gaussian,
    /// Log-link Poisson on the raw count; Wald z-tests.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub statistic: f64,
    /// `None` when the statistic is undefined (zero estimate and zero
    /// standard error).
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub family: Family,
    pub formula: Formula,
    pub coding: GenderCoding,
    pub n: usize,
    pub df_residual: usize,
    pub coefficients: Vec<Coefficient>,
    /// Estimated covariance of the estimates, row-major.
    pub covariance: Vec<Vec<f64>>,
    /// Residual variance (Gaussian) or 1 (Poisson).
    pub dispersion: f64,
    pub iterations: usize,
}

impl GlmFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    fn index(&self, t: Term) -> Option<usize> {
        self.formula.terms.iter().position(|x| *x == t)
    }

    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }

    /// Linear predictor for each row.
    pub fn linear_predictor(&self, rows: &[FrameRow]) -> Vec<f64> {
        let x = self.formula.design(rows, self.coding);
        (x * DVector::from_vec(self.beta())).iter().copied().collect()
    }

    /// Mean squared error of `ln(viewCount)` predictions.
    pub fn mse(&self, frame: &RegressionFrame) -> Option<f64> {
        if frame.is_empty() {
            return None;
        }
        // For the Poisson family ln E[y] stands in for E[ln y].
        let pred = self.linear_predictor(&frame.rows);
        Some(frame.rows.iter().zip(pred).map(|(r, p)| (r.y() - p).powi(2)).sum::<f64>() / frame.len() as f64)
    }
}

const RANK_TOL: f64 = 1e-10;

struct LsSolution {
    beta: DVector<f64>,
    /// `(X'X)^-1` for the (weighted) design.
    xtx_inv: DMatrix<f64>,
}

/// Least squares by Householder QR; rank deficiency names the offending
/// column.
fn qr_solve(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<LsSolution, FairnessError> {
    let p = x.ncols();
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(FairnessError::Collinear(names[j].clone()));
        }
    }
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty).expect("full rank checked");
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p)).expect("full rank checked");
    let xtx_inv = &r_inv * r_inv.transpose();
    Ok(LsSolution { beta, xtx_inv })
}

fn check_rows(frame: &RegressionFrame, formula: &Formula) -> Result<(), FairnessError> {
    if formula.terms.is_empty() {
        return Err(FairnessError::InvalidParameter("formula has no terms".into()));
    }
    let p = formula.terms.len();
    if frame.len() <= p {
        return Err(FairnessError::TooFewRows { needed: p + 1, got: frame.len() });
    }
    Ok(())
}

fn coefficients(
    names: &[String],
    beta: &DVector<f64>,
    cov: &DMatrix<f64>,
    test: impl Fn(f64) -> f64,
) -> Vec<Coefficient> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = cov[(j, j)].max(0.0).sqrt();
            let (statistic, p_value) = if se > 0.0 {
                let s = beta[j] / se;
                (s, Some(test(s)))
            } else if beta[j] == 0.0 {
                (f64::NAN, None)
            } else {
                (f64::INFINITY.copysign(beta[j]), Some(0.0))
            };
            Coefficient { name: name.clone(), estimate: beta[j], std_error: se, statistic, p_value }
        })
        .collect()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn fit_glm(
    frame: &RegressionFrame,
    formula: &Formula,
    family: Family,
    coding: GenderCoding,
) -> Result<GlmFit, FairnessError> {
    check_rows(frame, formula)?;
    let names = formula.names();
    let x = formula.design(&frame.rows, coding);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FairnessError::InvalidParameter("design matrix has undefined entries".into()));
    }
    let (n, p) = (x.nrows(), x.ncols());
    let df = n - p;
    match family {
        Family::Gaussian => {
            let y = DVector::from_iterator(n, frame.rows.iter().map(FrameRow::y));
            let sol = qr_solve(&x, &y, &names)?;
            let resid = &y - &x * &sol.beta;
            let sigma2 = resid.norm_squared() / df as f64;
            let cov = &sol.xtx_inv * sigma2;
            Ok(GlmFit {
                family,
                formula: formula.clone(),
                coding,
                n,
                df_residual: df,
                coefficients: coefficients(&names, &sol.beta, &cov, |t| t_two_sided(t, df as f64)),
                covariance: to_rows(&cov),
                dispersion: sigma2,
                iterations: 1,
            })
        }
        Family::Poisson => {
            let y = DVector::from_iterator(n, frame.rows.iter().map(|r| r.view_count as f64));
            let (beta, cov, iterations) = irls_poisson(&x, &y, &names)?;
            Ok(GlmFit {
                family,
                formula: formula.clone(),
                coding,
                n,
                df_residual: df,
                coefficients: coefficients(&names, &beta, &cov, z_two_sided),
                covariance: to_rows(&cov),
                dispersion: 1.0,
                iterations,
            })
        }
    }
}

fn poisson_deviance(y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    2.0 * y.iter().zip(mu.iter()).map(|(&y, &m)| if y > 0.0 { y * (y / m).ln() - (y - m) } else { m }).sum::<f64>()
}

fn irls_poisson(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
) -> Result<(DVector<f64>, DMatrix<f64>, usize), FairnessError> {
    const MAX_ITER: usize = 100;
    let n = x.nrows();
    let mut eta = y.map(|v| (v + 0.5).ln());
    let mut mu = eta.map(f64::exp);
    let mut dev = poisson_deviance(y, &mu);
    for iter in 1..=MAX_ITER {
        let w = mu.clone();
        let z = DVector::from_fn(n, |i, _| eta[i] + (y[i] - mu[i]) / mu[i]);
        let sw = w.map(f64::sqrt);
        let xw = DMatrix::from_fn(n, x.ncols(), |i, j| x[(i, j)] * sw[i]);
        let zw = z.component_mul(&sw);
        let sol = qr_solve(&xw, &zw, names)?;
        eta = x * &sol.beta;
        mu = eta.map(f64::exp);
        let new_dev = poisson_deviance(y, &mu);
        let done = (new_dev - dev).abs() <= 1e-12 * (new_dev.abs() + 0.1);
        dev = new_dev;
        if done {
            // Covariance at the converged weights.
            let sw = mu.map(f64::sqrt);
            let xw = DMatrix::from_fn(n, x.ncols(), |i, j| x[(i, j)] * sw[i]);
            let fin = qr_solve(&xw, &DVector::zeros(n), names)?;
            return Ok((sol.beta, fin.xtx_inv, iter));
        }
    }
    Err(FairnessError::NotConverged { method: "poisson irls", iterations: MAX_ITER })
}

/// Effect of FV at one value of the gender indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleSlope {
    pub gender_value: f64,
    pub slope: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub p_value: Option<f64>,
}

/// FV slope at Gender = 0 and Gender = 1, from a fit containing FV and
/// FV:Gender.
pub fn simple_slopes(fit: &GlmFit) -> Result<[SimpleSlope; 2], FairnessError> {
    let (Some(i), Some(k)) = (fit.index(Term::Fv), fit.index(Term::FvGender)) else {
        return Err(FairnessError::InvalidParameter("simple slopes need FV and FV:Gender in the model".into()));
    };
    let b = fit.beta();
    let c = &fit.covariance;
    let df = fit.df_residual as f64;
    let slope = |g: f64| {
        let est = b[i] + g * b[k];
        let var = c[i][i] + g * g * c[k][k] + 2.0 * g * c[i][k];
        let se = var.max(0.0).sqrt();
        let (statistic, p_value) = if se > 0.0 {
            let s = est / se;
            let p = match fit.family {
                Family::Gaussian => t_two_sided(s, df),
                Family::Poisson => z_two_sided(s),
            };
            (s, Some(p))
        } else {
            (f64::NAN, None)
        };
        SimpleSlope { gender_value: g, slope: est, std_error: se, statistic, p_value }
    };
    Ok([slope(0.0), slope(1.0)])
}
