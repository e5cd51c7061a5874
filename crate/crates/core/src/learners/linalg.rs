//! Symmetric positive (semi)definite solves with a ridge fallback.

use nalgebra::{DMatrix, DVector};

pub(crate) const RIDGE: f64 = 1e-8;

/// Solution of `m x = b` and whether the ridge fallback was needed.
#[derive(Debug, Clone)]
pub(crate) struct Solve {
    pub x: DVector<f64>,
    pub ridged: bool,
}

/// Solves `m x = b` for symmetric `m` by Cholesky. A failed or numerically
/// rank-deficient factorization retries with `m + RIDGE * I`.
pub(crate) fn solve_symmetric(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<Solve> {
    if let Some(x) = well_conditioned(m, b) {
        return Some(Solve { x, ridged: false });
    }
    let mut ridged = m.clone();
    let scale = m.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for k in 0..ridged.nrows() {
        ridged[(k, k)] += RIDGE * scale;
    }
    let chol = ridged.cholesky()?;
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(Solve { x, ridged: true })
}

fn well_conditioned(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let max_diag = m.diagonal().iter().fold(0.0f64, |acc, v| acc.max(*v));
    if max_diag <= 0.0 {
        return None;
    }
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..m.nrows()).map(|k| l[(k, k)] * l[(k, k)]).fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-12 * max_diag {
        return None;
    }
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `X^T diag(w) X`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut xw = x.clone();
    for j in 0..p {
        for i in 0..n {
            xw[(i, j)] *= w[i];
        }
    }
    xw.tr_mul(x)
}

/// `X^T diag(w) X` and `X^T (w .* z)`.
pub(crate) fn weighted_normal_equations(x: &DMatrix<f64>, w: &[f64], z: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let n = x.nrows();
    let rhs = x.tr_mul(&DVector::from_iterator(n, w.iter().zip(z).map(|(wi, zi)| wi * zi)));
    (weighted_gram(x, w), rhs)
}
