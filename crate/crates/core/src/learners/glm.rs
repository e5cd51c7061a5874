//! Generalized linear models on an explicit polynomial basis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{solve_symmetric, weighted_gram, weighted_normal_equations};
use crate::error::{GattError, Result};
use crate::frame::OutcomeFamily;

pub(crate) const IRLS_TOL: f64 = 1e-8;
pub(crate) const IRLS_MAX_ITER: usize = 100;

/// Intercept, main effects and, with `interaction_order = 1`, every pairwise
/// product `x_i x_j` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    pub interaction_order: u8,
}

impl Basis {
    pub fn main_effects() -> Self {
        Self { interaction_order: 0 }
    }

    pub fn pairwise() -> Self {
        Self { interaction_order: 1 }
    }

    pub fn width(&self, p: usize) -> usize {
        if self.interaction_order >= 1 {
            1 + p + p * (p.saturating_sub(1)) / 2
        } else {
            1 + p
        }
    }

    pub fn expand(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, p) = x.shape();
        let mut phi = DMatrix::zeros(n, self.width(p));
        phi.column_mut(0).fill(1.0);
        phi.columns_mut(1, p).copy_from(x);
        if self.interaction_order >= 1 {
            let mut k = 1 + p;
            for a in 0..p {
                for b in a + 1..p {
                    for i in 0..n {
                        phi[(i, k)] = x[(i, a)] * x[(i, b)];
                    }
                    k += 1;
                }
            }
        }
        phi
    }
}

pub(crate) fn expit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmFit {
    pub basis: Basis,
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub ridged: bool,
}

impl GlmFit {
    /// Linear predictor on the link scale.
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let phi = self.basis.expand(x);
        (phi * DVector::from_column_slice(&self.beta)).iter().copied().collect()
    }
}

pub(crate) fn fit_glm(basis: Basis, x: &DMatrix<f64>, y: &[f64], w: &[f64], family: OutcomeFamily) -> Result<GlmFit> {
    let phi = basis.expand(x);
    match family {
        OutcomeFamily::Gaussian => {
            let (gram, rhs) = weighted_normal_equations(&phi, w, y);
            let s = solve_symmetric(&gram, &rhs)
                .ok_or_else(|| GattError::Learner("gaussian glm normal equations are not solvable".into()))?;
            Ok(GlmFit { basis, beta: s.x.iter().copied().collect(), iterations: 1, ridged: s.ridged })
        }
        OutcomeFamily::Binomial => irls(basis, &phi, y, w),
    }
}

fn binomial_deviance(eta: &DVector<f64>, y: &[f64], w: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..y.len() {
        // log(1 + e^eta) - y eta, evaluated stably.
        let e = eta[i];
        let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
        d += w[i] * (softplus - y[i] * e);
    }
    d
}

/// Weighted Newton-Raphson for the logistic likelihood with step halving.
/// Accepts fractional responses in `[0, 1]`.
fn irls(basis: Basis, phi: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<GlmFit> {
    let (n, p) = phi.shape();
    let wsum: f64 = w.iter().sum();
    let ybar = (w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / wsum).clamp(1e-6, 1.0 - 1e-6);
    let mut beta = DVector::zeros(p);
    beta[0] = logit(ybar);
    let mut eta = phi * &beta;
    let mut dev = binomial_deviance(&eta, y, w);
    let mut ridged = false;
    let mut iterations = 0;
    let mut hw = vec![0.0; n];
    let mut score = DVector::zeros(n);
    while iterations < IRLS_MAX_ITER {
        for i in 0..n {
            let mu = expit(eta[i]);
            hw[i] = w[i] * mu * (1.0 - mu) / wsum;
            score[i] = w[i] * (y[i] - mu) / wsum;
        }
        let grad = phi.tr_mul(&score);
        let hess = weighted_gram(phi, &hw);
        if grad.norm() <= IRLS_TOL {
            break;
        }
        iterations += 1;
        let Some(step) = solve_symmetric(&hess, &grad) else { break };
        ridged |= step.ridged;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta + &step.x * scale;
            let cand_eta = phi * &cand;
            let cand_dev = binomial_deviance(&cand_eta, y, w);
            if cand_dev.is_finite() && cand_dev <= dev {
                beta = cand;
                eta = cand_eta;
                dev = cand_dev;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(GattError::Learner("logistic regression produced non-finite coefficients".into()));
    }
    Ok(GlmFit { basis, beta: beta.iter().copied().collect(), iterations, ridged })
}
