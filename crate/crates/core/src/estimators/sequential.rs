//! Backward sequential regressions `m_tau, ..., m_1`, optionally targeted.

use nalgebra::DMatrix;

use super::fluctuation::tmle_fluctuation_step;
use crate::error::{GattError, Result};
use crate::frame::LongitudinalFrame;
use crate::learners::{cross_fit, FoldPlan, LearnerSpec};
use crate::policy::PolicySpec;
use crate::rng::derive_seed;

/// Source of outcome-regression fits at one time point.
pub trait SequentialRegressor {
    /// Regresses `pseudo` on `(A_t, H_t)` among `eligible` units and returns
    /// per-unit held-out predictions at the observed and shifted treatment.
    fn regress(&self, t: usize, pseudo: &[f64], eligible: &[bool]) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Cross-fitted super-learner regressions.
pub struct CrossFitRegressor<'a> {
    frame: &'a LongitudinalFrame,
    observed: Vec<DMatrix<f64>>,
    shifted: Vec<DMatrix<f64>>,
    pools: Vec<Vec<LearnerSpec>>,
    plan: &'a FoldPlan,
    sl_folds: usize,
    seed: u64,
}

impl<'a> CrossFitRegressor<'a> {
    /// `pools[t - 1]` is the candidate pool for `m_t`.
    pub fn new(
        frame: &'a LongitudinalFrame,
        policy: &PolicySpec,
        pools: Vec<Vec<LearnerSpec>>,
        plan: &'a FoldPlan,
        sl_folds: usize,
        seed: u64,
    ) -> Self {
        let tau = frame.tau();
        let observed = (1..=tau).map(|t| frame.observed_design(t)).collect();
        let shifted = (1..=tau).map(|t| frame.design(t, &policy.shifted_treatment(frame, t))).collect();
        Self { frame, observed, shifted, pools, plan, sl_folds, seed }
    }
}

impl SequentialRegressor for CrossFitRegressor<'_> {
    fn regress(&self, t: usize, pseudo: &[f64], eligible: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
        let w = vec![1.0; pseudo.len()];
        let fit = cross_fit(
            &self.pools[t - 1],
            &self.observed[t - 1],
            pseudo,
            &w,
            eligible,
            self.frame.family(),
            self.plan,
            self.sl_folds,
            derive_seed(self.seed, &[t as u64]),
        )
        .map_err(|e| match e {
            GattError::Learner(msg) if msg.starts_with("no eligible") => GattError::EmptyRegressionSubset { t },
            other => other,
        })?;
        Ok((fit.predict(&self.observed[t - 1]), fit.predict(&self.shifted[t - 1])))
    }
}

/// Per-time predictions; index `t - 1` holds `m_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialFits {
    pub observed: Vec<Vec<f64>>,
    pub shifted: Vec<Vec<f64>>,
    /// Fluctuation parameter per time when targeted.
    pub epsilon: Vec<f64>,
}

impl SequentialFits {
    /// `m_{t}` at the shifted treatment, with `m_{tau+1} = Y`.
    pub fn next_shifted<'b>(&'b self, t: usize, y: &'b [f64]) -> &'b [f64] {
        if t == self.observed.len() {
            y
        } else {
            &self.shifted[t]
        }
    }
}

/// Fits `m_t` for `t = tau..1`. The regression at `t` uses units with
/// `A_{t+1:tau} in B_{t+1:tau}` (`indicators[t]`). With `targeting`, each fit
/// is fluctuated with weights `targeting[t - 1]` before it becomes the next
/// pseudo-outcome.
pub fn fit_sequential_regressions(
    frame: &LongitudinalFrame,
    indicators: &[Vec<bool>],
    regressor: &dyn SequentialRegressor,
    targeting: Option<&[Vec<f64>]>,
) -> Result<SequentialFits> {
    let tau = frame.tau();
    let mut observed = vec![Vec::new(); tau];
    let mut shifted = vec![Vec::new(); tau];
    let mut epsilon = Vec::new();
    for t in (1..=tau).rev() {
        let eligible = &indicators[t];
        if !eligible.iter().any(|&b| b) {
            return Err(GattError::EmptyRegressionSubset { t });
        }
        let pseudo: Vec<f64> = if t == tau { frame.outcome().to_vec() } else { shifted[t].clone() };
        let (mut obs, mut shift) = regressor.regress(t, &pseudo, eligible)?;
        if let Some(weights) = targeting {
            let f = tmle_fluctuation_step(&pseudo, &obs, &shift, &weights[t - 1], frame.family(), t)?;
            obs = f.observed;
            shift = f.shifted;
            epsilon.push(f.epsilon);
        }
        observed[t - 1] = obs;
        shifted[t - 1] = shift;
    }
    epsilon.reverse();
    Ok(SequentialFits { observed, shifted, epsilon })
}
