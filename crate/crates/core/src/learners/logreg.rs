//! L2-regularized logistic regression fitted by damped Newton.
//!
//! The objective is the mean negative log-likelihood plus `λ/2 ‖w‖²`; the
//! bias is not penalized. Using the mean makes the optimum invariant to
//! replicating the training set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_training_set, LearnError};
use crate::features::FeatureVector;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegParams {
    pub l2_lambda: f64,
    /// Sup-norm of the gradient at which fitting stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams { l2_lambda: 1e-2, tol: 1e-8, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2_lambda: f64,
    /// False when `max_iter` ran out or the line search stalled before the
    /// gradient reached `tol`.
    pub converged: bool,
    pub iterations: usize,
    pub gradient_sup_norm: f64,
}

/// A fitted model together with the objective value after every accepted
/// iteration (starting from the zero model).
#[derive(Debug, Clone)]
pub struct LogRegFit {
    pub model: LogRegModel,
    pub objective_trace: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn linear(theta: &[f64], x: &FeatureVector) -> f64 {
    let d = theta.len() - 1;
    x.dot(&theta[..d]) + theta[d]
}

/// Regularized objective at `theta = [w_0, .., w_{d-1}, b]`.
pub fn objective(theta: &[f64], x: &[FeatureVector], y: &[bool], l2_lambda: f64) -> f64 {
    let n = x.len() as f64;
    let d = theta.len() - 1;
    let nll: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let z = linear(theta, xi);
            softplus(z) - if yi { z } else { 0.0 }
        })
        .sum();
    let penalty: f64 = theta[..d].iter().map(|w| w * w).sum();
    nll / n + 0.5 * l2_lambda * penalty
}

/// Analytic gradient of [`objective`].
pub fn objective_gradient(theta: &[f64], x: &[FeatureVector], y: &[bool], l2_lambda: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let d = theta.len() - 1;
    let mut g = vec![0.0; d + 1];
    for (xi, &yi) in x.iter().zip(y) {
        let r = sigmoid(linear(theta, xi)) - f64::from(u8::from(yi));
        for &(j, v) in xi.entries() {
            g[j] += r * v;
        }
        g[d] += r;
    }
    for (j, gj) in g.iter_mut().enumerate() {
        *gj /= n;
        if j < d {
            *gj += l2_lambda * theta[j];
        }
    }
    g
}

fn hessian(theta: &[f64], x: &[FeatureVector], l2_lambda: f64) -> DMatrix<f64> {
    let n = x.len() as f64;
    let d = theta.len() - 1;
    let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
    for xi in x {
        let p = sigmoid(linear(theta, xi));
        let s = p * (1.0 - p) / n;
        let e = xi.entries();
        for (a, &(i, vi)) in e.iter().enumerate() {
            for &(j, vj) in &e[a..] {
                h[(i, j)] += s * vi * vj;
            }
            h[(i, d)] += s * vi;
        }
        h[(d, d)] += s;
    }
    for i in 0..=d {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
        if i < d {
            h[(i, i)] += l2_lambda;
        }
    }
    h
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn fit_logreg(x: &[FeatureVector], y: &[bool], params: LogRegParams) -> Result<LogRegModel, LearnError> {
    fit_logreg_traced(x, y, params).map(|f| f.model)
}

/// Newton steps with Armijo backtracking; falls back to the negative
/// gradient when the Hessian is not positive definite.
pub fn fit_logreg_traced(x: &[FeatureVector], y: &[bool], params: LogRegParams) -> Result<LogRegFit, LearnError> {
    let d = check_training_set(x, y)?;
    if !(params.l2_lambda >= 0.0 && params.l2_lambda.is_finite()) {
        return Err(LearnError::InvalidParams(format!("l2_lambda = {}", params.l2_lambda)));
    }
    if params.tol.is_nan() || params.tol <= 0.0 {
        return Err(LearnError::InvalidParams(format!("tol = {}", params.tol)));
    }
    let lambda = params.l2_lambda;
    let mut theta = vec![0.0; d + 1];
    let mut f = objective(&theta, x, y, lambda);
    let mut trace = vec![f];
    let mut grad = objective_gradient(&theta, x, y, lambda);
    let mut converged = sup_norm(&grad) <= params.tol;
    let mut iterations = 0;
    while !converged && iterations < params.max_iter {
        let g = DVector::from_column_slice(&grad);
        let newton = hessian(&theta, x, lambda).cholesky().map(|c| -c.solve(&g));
        let direction = match newton {
            Some(step) if step.iter().all(|v| v.is_finite()) && step.dot(&g) < 0.0 => step,
            _ => -g.clone(),
        };
        let slope = direction.dot(&g);
        let mut step = 1.0;
        let accepted = loop {
            let candidate: Vec<f64> = theta.iter().zip(direction.iter()).map(|(t, s)| t + step * s).collect();
            let fc = objective(&candidate, x, y, lambda);
            if fc <= f + ARMIJO * step * slope {
                break Some((candidate, fc));
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((candidate, fc)) = accepted else { break };
        theta = candidate;
        f = fc;
        trace.push(f);
        iterations += 1;
        grad = objective_gradient(&theta, x, y, lambda);
        converged = sup_norm(&grad) <= params.tol;
    }
    let bias = theta.pop().expect("bias slot");
    Ok(LogRegFit {
        model: LogRegModel {
            weights: theta,
            bias,
            l2_lambda: lambda,
            converged,
            iterations,
            gradient_sup_norm: sup_norm(&grad),
        },
        objective_trace: trace,
    })
}

impl LogRegModel {
    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// `sigmoid(w·x + b)`.
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64, LearnError> {
        if x.dimension() != self.weights.len() {
            return Err(LearnError::DimensionMismatch { expected: self.weights.len(), got: x.dimension() });
        }
        Ok(sigmoid(x.dot(&self.weights) + self.bias))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::from_dense(v)
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = LogRegModel {
            weights: vec![0.0; 3],
            bias: 0.0,
            l2_lambda: 0.0,
            converged: true,
            iterations: 0,
            gradient_sup_norm: 0.0,
        };
        assert_eq!(m.predict_proba(&fv(&[1.0, 2.0, 3.0])).unwrap(), 0.5);
        assert!(m.predict_proba(&fv(&[1.0])).is_err());
    }

    #[test]
    fn fixture_prediction_by_hand() {
        let m = LogRegModel {
            weights: vec![0.5, -1.0],
            bias: 0.25,
            l2_lambda: 0.0,
            converged: true,
            iterations: 0,
            gradient_sup_norm: 0.0,
        };
        // z = 0.5*2 - 1*0.5 + 0.25 = 0.75
        let expected = 1.0 / (1.0 + (-0.75f64).exp());
        assert!((m.predict_proba(&fv(&[2.0, 0.5])).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn degenerate_labels_rejected() {
        let x = vec![fv(&[1.0]), fv(&[2.0])];
        assert!(matches!(fit_logreg(&x, &[true, true], LogRegParams::default()), Err(LearnError::DegenerateLabels)));
    }

    #[test]
    fn duplicated_data_same_model() {
        let x = vec![fv(&[0.3, 1.0]), fv(&[-1.0, 0.2]), fv(&[0.8, -0.5]), fv(&[-0.2, -0.9])];
        let y = vec![true, false, true, false];
        let params = LogRegParams { l2_lambda: 0.5, tol: 1e-12, max_iter: 100 };
        let a = fit_logreg(&x, &y, params).unwrap();
        let xx: Vec<FeatureVector> = x.iter().chain(x.iter()).cloned().collect();
        let yy: Vec<bool> = y.iter().chain(y.iter()).copied().collect();
        let b = fit_logreg(&xx, &yy, params).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() < 1e-10);
        }
        assert!((a.bias - b.bias).abs() < 1e-10);
    }

    #[test]
    fn heavy_penalty_gives_prior() {
        let x = vec![fv(&[1.0]), fv(&[2.0]), fv(&[3.0]), fv(&[4.0])];
        let y = vec![false, true, true, true];
        let m = fit_logreg(&x, &y, LogRegParams { l2_lambda: 1e9, tol: 1e-12, max_iter: 100 }).unwrap();
        assert!(m.weights[0].abs() < 1e-8);
        assert!((sigmoid(m.bias) - 0.75).abs() < 1e-8);
    }

    #[test]
    fn objective_decreases_and_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<FeatureVector> =
            (0..60).map(|_| fv(&[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])).collect();
        let y: Vec<bool> = x.iter().map(|v| v.get(0) + 0.5 * v.get(1) + rng.random_range(-1.0..1.0) > 0.0).collect();
        let params = LogRegParams { l2_lambda: 0.1, tol: 1e-10, max_iter: 50 };
        let fit = fit_logreg_traced(&x, &y, params).unwrap();
        assert!(fit.model.converged);
        assert!(fit.model.gradient_sup_norm <= params.tol);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn separable_without_penalty_stays_finite() {
        let x = vec![fv(&[-1.0]), fv(&[1.0])];
        let m = fit_logreg(&x, &[false, true], LogRegParams { l2_lambda: 0.0, tol: 1e-8, max_iter: 200 }).unwrap();
        assert!(m.weights[0].is_finite() && m.weights[0] > 0.0);
        assert!(m.predict_proba(&fv(&[1.0])).unwrap() > 0.99);
    }
}
