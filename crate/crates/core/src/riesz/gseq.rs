use serde::Serialize;

use crate::conditioning::{indicator_table, ConditioningSpec};
use crate::error::{GattError, Result};
use crate::frame::{LongitudinalFrame, OutcomeFamily};
use crate::learners::{cross_fit, CrossFitted, FoldPlan, LearnerSpec};
use crate::rng::derive_seed;

/// Conditioning probabilities `G_t(A_t, H_t) = P(A_{t+1:tau} in B_{t+1:tau} | A_t, H_t)`.
#[derive(Debug, Clone, Serialize)]
pub struct GSequence {
    pub g0: f64,
    /// `indicators[t]` is `1{A_{t+1:tau} in B_{t+1:tau}}` for `t` in `0..=tau`.
    #[serde(skip)]
    pub indicators: Vec<Vec<bool>>,
    /// Cross-fitted model for `t` in `1..tau`; `None` where `G_t` is one.
    #[serde(skip)]
    fits: Vec<Option<CrossFitted>>,
    /// `observed[t - 1]` holds `G_t(A_t, H_t)` per unit for `t` in `1..=tau`.
    #[serde(skip)]
    pub observed: Vec<Vec<f64>>,
}

impl GSequence {
    pub fn tau(&self) -> usize {
        self.observed.len()
    }

    /// `G_{t}` at the observed treatment, with `t = 0` giving the constant `G_0`.
    pub fn observed_at(&self, t: usize) -> Vec<f64> {
        if t == 0 {
            vec![self.g0; self.indicators[0].len()]
        } else {
            self.observed[t - 1].clone()
        }
    }

    /// Cross-fitted `G_t(a_i, H_{t,i})` at arbitrary treatment values.
    pub fn evaluate(&self, frame: &LongitudinalFrame, t: usize, a: &[f64]) -> Vec<f64> {
        match self.fits.get(t - 1).and_then(Option::as_ref) {
            Some(fit) => fit.predict(&frame.design(t, a)),
            None => vec![1.0; frame.n()],
        }
    }

    pub fn n_conditioning(&self) -> usize {
        self.indicators[0].iter().filter(|&&b| b).count()
    }
}

/// Exact `G` values supplied by the caller, e.g. from an enumerable law.
pub fn g_sequence_from_values(
    frame: &LongitudinalFrame,
    conditioning: &ConditioningSpec,
    observed: Vec<Vec<f64>>,
    g0: f64,
) -> GSequence {
    GSequence { g0, indicators: indicator_table(frame, conditioning), fits: vec![None; frame.tau()], observed }
}

pub fn fit_g_sequence(
    frame: &LongitudinalFrame,
    conditioning: &ConditioningSpec,
    pool: &[LearnerSpec],
    plan: &FoldPlan,
    sl_folds: usize,
    seed: u64,
) -> Result<GSequence> {
    let tau = frame.tau();
    let n = frame.n();
    let indicators = indicator_table(frame, conditioning);
    let in_stratum = indicators[0].iter().filter(|&&b| b).count();
    if in_stratum == 0 {
        return Err(GattError::EmptyConditioningStratum);
    }
    let g0 = in_stratum as f64 / n as f64;
    let mut fits = Vec::with_capacity(tau);
    let mut observed = Vec::with_capacity(tau);
    let everyone = vec![true; n];
    let ones = vec![1.0; n];
    for t in 1..=tau {
        if t == tau || conditioning.is_trivial_from(t + 1) {
            fits.push(None);
            observed.push(vec![1.0; n]);
            continue;
        }
        let y: Vec<f64> = indicators[t].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let x = frame.observed_design(t);
        let fit = cross_fit(pool, &x, &y, &ones, &everyone, OutcomeFamily::Binomial, plan, sl_folds, derive_seed(seed, &[t as u64]))?;
        observed.push(fit.predict(&x));
        fits.push(Some(fit));
    }
    Ok(GSequence { g0, indicators, fits, observed })
}
