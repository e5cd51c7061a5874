//! Multinomial logistic regression for discrete treatments, with the first
//! level as the reference class.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::glm::{Basis, IRLS_MAX_ITER, IRLS_TOL};
use super::linalg::solve_symmetric;
use super::P_MIN;
use crate::error::{GattError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultinomialFit {
    pub levels: Vec<f64>,
    pub basis: Basis,
    /// `(K - 1)` coefficient vectors, one per non-reference level.
    pub beta: Vec<Vec<f64>>,
    pub ridged: bool,
}

fn softmax_rows(phi: &DMatrix<f64>, beta: &DVector<f64>, k: usize) -> DMatrix<f64> {
    let (n, q) = phi.shape();
    let mut probs = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut eta = vec![0.0; k];
        for c in 1..k {
            let mut s = 0.0;
            for j in 0..q {
                s += phi[(i, j)] * beta[(c - 1) * q + j];
            }
            eta[c] = s;
        }
        let mx = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let denom: f64 = eta.iter().map(|e| (e - mx).exp()).sum();
        for c in 0..k {
            probs[(i, c)] = (eta[c] - mx).exp() / denom;
        }
    }
    probs
}

fn nll(probs: &DMatrix<f64>, class: &[usize], w: &[f64]) -> f64 {
    class.iter().enumerate().map(|(i, &c)| -w[i] * probs[(i, c)].max(1e-300).ln()).sum()
}

/// Weighted Newton fit of `P(A = level_c | x)`. `a` must take values in
/// `levels` (sorted ascending, at least two).
pub fn fit_multinomial(basis: Basis, x: &DMatrix<f64>, a: &[f64], w: &[f64], levels: &[f64]) -> Result<MultinomialFit> {
    let k = levels.len();
    if k < 2 {
        return Err(GattError::Learner("multinomial regression needs at least two levels".into()));
    }
    let class: Vec<usize> = a
        .iter()
        .map(|v| levels.iter().position(|l| l == v))
        .collect::<Option<_>>()
        .ok_or_else(|| GattError::Learner("treatment value outside the level set".into()))?;
    let phi = basis.expand(x);
    let (n, q) = phi.shape();
    let dim = q * (k - 1);
    let wsum: f64 = w.iter().sum();

    // Start from the marginal frequencies.
    let mut beta = DVector::zeros(dim);
    let mut freq = vec![0.0; k];
    for (i, &c) in class.iter().enumerate() {
        freq[c] += w[i] / wsum;
    }
    for c in 1..k {
        beta[(c - 1) * q] = (freq[c].max(P_MIN) / freq[0].max(P_MIN)).ln();
    }
    let mut probs = softmax_rows(&phi, &beta, k);
    let mut loss = nll(&probs, &class, w);
    let mut ridged = false;
    for _ in 0..IRLS_MAX_ITER {
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for i in 0..n {
            let wi = w[i] / wsum;
            if wi == 0.0 {
                continue;
            }
            let row = phi.row(i);
            for c in 1..k {
                let resid = (if class[i] == c { 1.0 } else { 0.0 }) - probs[(i, c)];
                for j in 0..q {
                    grad[(c - 1) * q + j] += wi * resid * row[j];
                }
                for d in c..k {
                    let cov = if c == d { probs[(i, c)] * (1.0 - probs[(i, c)]) } else { -probs[(i, c)] * probs[(i, d)] };
                    let s = wi * cov;
                    if s == 0.0 {
                        continue;
                    }
                    for j in 0..q {
                        for l in 0..q {
                            hess[((c - 1) * q + j, (d - 1) * q + l)] += s * row[j] * row[l];
                        }
                    }
                }
            }
        }
        for r in 0..dim {
            for s in 0..r {
                hess[(r, s)] = hess[(s, r)];
            }
        }
        if grad.norm() <= IRLS_TOL {
            break;
        }
        let Some(step) = solve_symmetric(&hess, &grad) else { break };
        ridged |= step.ridged;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta + &step.x * scale;
            let cp = softmax_rows(&phi, &cand, k);
            let cl = nll(&cp, &class, w);
            if cl.is_finite() && cl <= loss {
                beta = cand;
                probs = cp;
                loss = cl;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let beta = (0..k - 1).map(|c| beta.rows(c * q, q).iter().copied().collect()).collect();
    Ok(MultinomialFit { levels: levels.to_vec(), basis, beta, ridged })
}

impl MultinomialFit {
    /// Row `i` holds `P(A = levels[c] | x_i)`, floored at `P_MIN` and
    /// renormalized. The second value counts floored entries.
    pub fn predict_pmf(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
        let q = self.basis.width(x.ncols());
        let flat = DVector::from_iterator(q * self.beta.len(), self.beta.iter().flatten().copied());
        let mut probs = softmax_rows(&self.basis.expand(x), &flat, self.levels.len());
        let mut clamped = 0;
        for mut row in probs.row_iter_mut() {
            for v in row.iter_mut() {
                if *v < P_MIN {
                    *v = P_MIN;
                    clamped += 1;
                }
            }
            let s: f64 = row.sum();
            row /= s;
        }
        (probs, clamped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturated_three_level_frequencies() {
        // Binary covariate, three treatment levels: MLE equals cell frequencies.
        let x = DMatrix::from_column_slice(10, 1, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let a = [0.0, 1.0, 1.0, 2.0, 2.0, 0.0, 0.0, 0.0, 1.0, 2.0];
        let fit = fit_multinomial(Basis::main_effects(), &x, &a, &[1.0; 10], &[0.0, 1.0, 2.0]).unwrap();
        let (p, _) = fit.predict_pmf(&x);
        let expect0 = [0.2, 0.4, 0.4];
        let expect1 = [0.6, 0.2, 0.2];
        for c in 0..3 {
            assert!((p[(0, c)] - expect0[c]).abs() < 1e-8);
            assert!((p[(9, c)] - expect1[c]).abs() < 1e-8);
        }
        for r in 0..10 {
            assert!((p.row(r).sum() - 1.0).abs() < 1e-12);
        }
    }
}
