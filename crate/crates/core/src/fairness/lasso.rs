//! L1-penalized least squares on standardized predictors.
//!
//! Objective: `(1/2n) ||y_c - X_s b||^2 + lambda ||b||_1`, where `X_s` has
//! zero-mean, unit population-variance columns and `y_c` is centered. The
//! intercept is the mean of `y` and is not penalized.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::{FrameRow, GenderCoding, RegressionFrame};
use super::glm::{Formula, Term};
use super::FairnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    /// n x p, column-major as in nalgebra.
    pub x: DMatrix<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub y_mean: f64,
    pub y: Vec<f64>,
}

/// Centers and scales every column. A constant column is an error naming it.
pub fn standardize(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<Standardized, FairnessError> {
    let n = x.nrows();
    if n == 0 || y.len() != n {
        return Err(FairnessError::InvalidParameter("empty or mismatched design".into()));
    }
    let mut out = x.clone();
    let (mut means, mut scales) = (Vec::new(), Vec::new());
    for j in 0..x.ncols() {
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if var <= 0.0 {
            return Err(FairnessError::Collinear(names[j].clone()));
        }
        let sd = var.sqrt();
        for i in 0..n {
            out[(i, j)] = (x[(i, j)] - mean) / sd;
        }
        means.push(mean);
        scales.push(sd);
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    Ok(Standardized { x: out, means, scales, y_mean, y: y.iter().map(|v| v - y_mean).collect() })
}

/// Smallest lambda at which every coefficient is zero.
pub fn lambda_max(s: &Standardized) -> f64 {
    let n = s.x.nrows() as f64;
    (0..s.x.ncols())
        .map(|j| s.x.column(j).iter().zip(&s.y).map(|(a, b)| a * b).sum::<f64>().abs() / n)
        .fold(0.0, f64::max)
}

/// `count` values from `lambda_max` down to `lambda_max * ratio`, evenly
/// spaced in log scale.
pub fn log_grid(lambda_max: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count <= 1 || lambda_max <= 0.0 {
        return vec![lambda_max.max(0.0)];
    }
    (0..count).map(|i| lambda_max * ratio.powf(i as f64 / (count - 1) as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdSettings {
    /// Stop when no coefficient moves by more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for CdSettings {
    fn default() -> Self {
        CdSettings { tol: 1e-13, max_sweeps: 1_000_000 }
    }
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Cyclic coordinate descent from `warm` (zeros when `None`). Returns the
/// coefficients and the number of sweeps.
pub fn coordinate_descent(
    s: &Standardized,
    lambda: f64,
    warm: Option<&[f64]>,
    settings: CdSettings,
) -> Result<(Vec<f64>, usize), FairnessError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(FairnessError::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let (n, p) = (s.x.nrows(), s.x.ncols());
    let nf = n as f64;
    let mut beta = warm.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    let mut resid = s.y.clone();
    for (j, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            for (i, r) in resid.iter_mut().enumerate() {
                *r -= s.x[(i, j)] * b;
            }
        }
    }
    let curv: Vec<f64> = (0..p).map(|j| s.x.column(j).norm_squared() / nf).collect();
    for sweep in 1..=settings.max_sweeps {
        let mut max_step: f64 = 0.0;
        for j in 0..p {
            let col = s.x.column(j);
            let grad = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf;
            let new = soft_threshold(curv[j] * beta[j] + grad, lambda) / curv[j];
            let step = new - beta[j];
            if step != 0.0 {
                for (i, r) in resid.iter_mut().enumerate() {
                    *r -= col[i] * step;
                }
                beta[j] = new;
                max_step = max_step.max(step.abs());
            }
        }
        if max_step <= settings.tol {
            return Ok((beta, sweep));
        }
    }
    Err(FairnessError::NotConverged { method: "lasso coordinate descent", iterations: settings.max_sweeps })
}

/// Largest violation of the lasso optimality conditions.
pub fn kkt_violation(s: &Standardized, beta: &[f64], lambda: f64) -> f64 {
    let n = s.x.nrows() as f64;
    let resid: Vec<f64> =
        (0..s.x.nrows()).map(|i| s.y[i] - (0..s.x.ncols()).map(|j| s.x[(i, j)] * beta[j]).sum::<f64>()).collect();
    (0..s.x.ncols())
        .map(|j| {
            let g = s.x.column(j).iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / n;
            if beta[j] == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * beta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Empty means an automatic 50-point log grid down to `lambda_max / 1000`.
    pub lambdas: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub settings: CdSettings,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig { lambdas: Vec::new(), folds: 10, seed: 0, settings: CdSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub formula: Formula,
    pub coding: GenderCoding,
    /// Predictor names, without the intercept.
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub intercept: f64,
    pub lambdas: Vec<f64>,
    /// Standardized coefficients on the full training data, one row per
    /// lambda.
    pub path: Vec<Vec<f64>>,
    pub cv_mse: Vec<f64>,
    pub best_lambda: f64,
    /// Standardized coefficients at `best_lambda`.
    pub coefficients: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl LassoFit {
    /// Coefficient on the original predictor scale.
    pub fn raw_coefficient(&self, j: usize) -> f64 {
        self.coefficients[j] / self.scales[j]
    }

    pub fn predict(&self, rows: &[FrameRow]) -> Vec<f64> {
        predict_with(&self.formula, self.coding, rows, &self.means, &self.scales, self.intercept, &self.coefficients)
    }

    pub fn mse(&self, frame: &RegressionFrame) -> Option<f64> {
        if frame.is_empty() {
            return None;
        }
        let pred = self.predict(&frame.rows);
        Some(frame.rows.iter().zip(pred).map(|(r, p)| (r.y() - p).powi(2)).sum::<f64>() / frame.len() as f64)
    }
}

fn predictors(formula: &Formula) -> Formula {
    Formula { terms: formula.terms.iter().copied().filter(|t| *t != Term::Intercept).collect() }
}

fn predict_with(
    formula: &Formula,
    coding: GenderCoding,
    rows: &[FrameRow],
    means: &[f64],
    scales: &[f64],
    intercept: f64,
    beta: &[f64],
) -> Vec<f64> {
    let x = predictors(formula).design(rows, coding);
    (0..rows.len())
        .map(|i| intercept + (0..beta.len()).map(|j| (x[(i, j)] - means[j]) / scales[j] * beta[j]).sum::<f64>())
        .collect()
}

/// Fold index of every row, from a seeded permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (k, i) in order.into_iter().enumerate() {
        fold[i] = k % folds;
    }
    fold
}

fn path(s: &Standardized, lambdas: &[f64], settings: CdSettings) -> Result<Vec<Vec<f64>>, FairnessError> {
    // Warm starts run from the largest lambda down; results keep grid order.
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|a, b| lambdas[*b].total_cmp(&lambdas[*a]));
    let mut out = vec![Vec::new(); lambdas.len()];
    let mut warm: Option<Vec<f64>> = None;
    for k in order {
        let (b, _) = coordinate_descent(s, lambdas[k], warm.as_deref(), settings)?;
        warm = Some(b.clone());
        out[k] = b;
    }
    Ok(out)
}

/// Fits the lasso path and picks lambda by k-fold cross-validated MSE. Ties
/// go to the larger lambda.
pub fn fit_lasso(
    frame: &RegressionFrame,
    formula: &Formula,
    coding: GenderCoding,
    config: &LassoConfig,
) -> Result<LassoFit, FairnessError> {
    let pred = predictors(formula);
    let names = pred.names();
    if names.is_empty() {
        return Err(FairnessError::InvalidParameter("lasso needs at least one predictor".into()));
    }
    let n = frame.len();
    if config.folds < 2 || config.folds > n {
        return Err(FairnessError::InvalidParameter(format!("cv folds must be in 2..={n}, got {}", config.folds)));
    }
    if config.lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(FairnessError::InvalidParameter("lambdas must be finite and >= 0".into()));
    }
    let x = pred.design(&frame.rows, coding);
    let y: Vec<f64> = frame.rows.iter().map(FrameRow::y).collect();
    let full = standardize(&x, &y, &names)?;
    let lambdas =
        if config.lambdas.is_empty() { log_grid(lambda_max(&full), 1e-3, 50) } else { config.lambdas.clone() };
    let full_path = path(&full, &lambdas, config.settings)?;

    let fold = fold_assignment(n, config.folds, config.seed);
    let mut sse = vec![0.0; lambdas.len()];
    for f in 0..config.folds {
        let train: Vec<FrameRow> = (0..n).filter(|i| fold[*i] != f).map(|i| frame.rows[i].clone()).collect();
        let held: Vec<FrameRow> = (0..n).filter(|i| fold[*i] == f).map(|i| frame.rows[i].clone()).collect();
        let xt = pred.design(&train, coding);
        let yt: Vec<f64> = train.iter().map(FrameRow::y).collect();
        let s = standardize(&xt, &yt, &names)?;
        let fold_path = path(&s, &lambdas, config.settings)?;
        for (k, beta) in fold_path.iter().enumerate() {
            let p = predict_with(&pred, coding, &held, &s.means, &s.scales, s.y_mean, beta);
            sse[k] += held.iter().zip(p).map(|(r, p)| (r.y() - p).powi(2)).sum::<f64>();
        }
    }
    let cv_mse: Vec<f64> = sse.iter().map(|v| v / n as f64).collect();
    let best = (0..lambdas.len())
        .min_by(|a, b| cv_mse[*a].total_cmp(&cv_mse[*b]).then(lambdas[*b].total_cmp(&lambdas[*a])))
        .expect("non-empty grid");
    Ok(LassoFit {
        formula: pred,
        coding,
        names,
        means: full.means.clone(),
        scales: full.scales.clone(),
        intercept: full.y_mean,
        coefficients: full_path[best].clone(),
        best_lambda: lambdas[best],
        lambdas,
        path: full_path,
        cv_mse,
        folds: config.folds,
        seed: config.seed,
    })
}
