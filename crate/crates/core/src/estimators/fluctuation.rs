//! One-dimensional intercept fluctuation on the canonical link scale.

use crate::error::{GattError, Result};
use crate::frame::OutcomeFamily;
use crate::learners::{expit, logit, P_MIN};

pub const SCORE_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Fluctuation {
    pub epsilon: f64,
    pub observed: Vec<f64>,
    pub shifted: Vec<f64>,
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(P_MIN, 1.0 - P_MIN)
}

/// Mean weighted score `(1/n) sum w (y* - expit(eps + logit m))`.
fn binomial_score(eps: f64, y: &[f64], offset: &[f64], w: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let (mut s, mut ds) = (0.0, 0.0);
    for i in 0..y.len() {
        if w[i] == 0.0 {
            continue;
        }
        let mu = expit(eps + offset[i]);
        s += w[i] * (y[i] - mu);
        ds -= w[i] * mu * (1.0 - mu);
    }
    (s / n, ds / n)
}

fn solve_binomial(y: &[f64], offset: &[f64], w: &[f64], t: usize) -> Result<f64> {
    let mut eps = 0.0;
    let (mut s, mut ds) = binomial_score(eps, y, offset, w);
    let mut steps = 0;
    while s.abs() > SCORE_TOL && steps < MAX_NEWTON {
        steps += 1;
        if ds >= 0.0 || !ds.is_finite() {
            break;
        }
        let mut step = -s / ds;
        let mut moved = false;
        for _ in 0..50 {
            let (s_new, ds_new) = binomial_score(eps + step, y, offset, w);
            if s_new.abs() < s.abs() {
                eps += step;
                s = s_new;
                ds = ds_new;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if s.abs() <= SCORE_TOL {
        return Ok(eps);
    }
    // Signed weights can make the score non-monotone; fall back to bisection
    // on a sign-changing bracket.
    bisect(y, offset, w).ok_or(GattError::FluctuationDiverged { t, residual: s.abs() })
}

fn bisect(y: &[f64], offset: &[f64], w: &[f64]) -> Option<f64> {
    let score = |e: f64| binomial_score(e, y, offset, w).0;
    let s0 = score(0.0);
    let mut width = 1.0;
    let (mut lo, mut hi) = (0.0, 0.0);
    let mut found = false;
    while width <= 64.0 {
        if score(width).signum() != s0.signum() {
            (lo, hi) = (0.0, width);
            found = true;
            break;
        }
        if score(-width).signum() != s0.signum() {
            (lo, hi) = (-width, 0.0);
            found = true;
            break;
        }
        width *= 2.0;
    }
    if !found {
        return None;
    }
    let s_lo = score(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s_mid = score(mid);
        if s_mid.abs() <= SCORE_TOL {
            return Some(mid);
        }
        if s_mid.signum() == s_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    (score(mid).abs() <= SCORE_TOL).then_some(mid)
}

/// Solves the weighted score `sum w (y* - inverse_link(eps + link(m))) = 0`
/// for a scalar `eps` and applies it to both prediction vectors. `t` only
/// labels errors.
pub fn tmle_fluctuation_step(
    pseudo: &[f64],
    observed: &[f64],
    shifted: &[f64],
    weights: &[f64],
    family: OutcomeFamily,
    t: usize,
) -> Result<Fluctuation> {
    match family {
        OutcomeFamily::Gaussian => {
            let wsum: f64 = weights.iter().sum();
            let epsilon = if wsum == 0.0 {
                0.0
            } else {
                weights.iter().zip(pseudo).zip(observed).map(|((w, y), m)| w * (y - m)).sum::<f64>() / wsum
            };
            Ok(Fluctuation {
                epsilon,
                observed: observed.iter().map(|m| m + epsilon).collect(),
                shifted: shifted.iter().map(|m| m + epsilon).collect(),
            })
        }
        OutcomeFamily::Binomial => {
            let offset: Vec<f64> = observed.iter().map(|&m| logit(clamp_p(m))).collect();
            let epsilon = solve_binomial(pseudo, &offset, weights, t)?;
            // Updated values are left unclamped so the solved score holds exactly.
            Ok(Fluctuation {
                epsilon,
                observed: offset.iter().map(|o| expit(epsilon + o)).collect(),
                shifted: shifted.iter().map(|&m| expit(epsilon + logit(clamp_p(m)))).collect(),
            })
        }
    }
}
