//! Substitution, weighted (IPW) and TMLE estimators of the GATT, with
//! influence-function standard errors for TMLE.

mod eif;
mod fluctuation;
mod ratio;
mod sequential;

use serde::{Deserialize, Serialize};

pub use eif::{compute_eif, targeting_weights};
pub use fluctuation::{tmle_fluctuation_step, Fluctuation, SCORE_TOL};
pub use ratio::{ratio_estimate, RatioEstimate, RatioMethod};
pub use sequential::{fit_sequential_regressions, CrossFitRegressor, SequentialFits, SequentialRegressor};

use crate::conditioning::{validate_comparability, Comparability};
use crate::error::{GattError, Result};
use crate::frame::LongitudinalFrame;
use crate::learners::{make_folds, FoldPlan};
use crate::riesz::{fit_g_sequence, fit_ratio_plugin_sequence, fit_riesz_sequence, AlphaSummary, GSequence, RieszMode, WeightFit};
use crate::rng::derive_seed;
use crate::task::{EstimatorKind, TaskSpec};

/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Weights above this trigger a warning.
const LARGE_ALPHA: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub g0_hat: f64,
    #[serde(default)]
    pub alpha_max: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<AlphaSummary>,
    #[serde(default)]
    pub mean_eif: Option<f64>,
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub ridge_fallback: bool,
    #[serde(default)]
    pub comparability_k: Option<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimator: EstimatorKind,
    pub theta_hat: f64,
    #[serde(default)]
    pub se: Option<f64>,
    #[serde(default)]
    pub ci: Option<[f64; 2]>,
    pub n: usize,
    pub n_conditioning: usize,
    pub diagnostics: Diagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eif: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSpec>,
}

impl EstimateResult {
    /// True when every number in the result is finite.
    pub fn is_finite(&self) -> bool {
        let d = &self.diagnostics;
        let opt = |v: Option<f64>| v.is_none_or(f64::is_finite);
        self.theta_hat.is_finite()
            && opt(self.se)
            && self.ci.is_none_or(|c| c.iter().all(|v| v.is_finite()))
            && self.eif.as_ref().is_none_or(|e| e.iter().all(|v| v.is_finite()))
            && d.g0_hat.is_finite()
            && d.alpha_max.iter().chain(&d.epsilon).all(|v| v.is_finite())
            && d.alpha.iter().all(|a| [a.min, a.max, a.mean, a.sd].iter().all(|v| v.is_finite()))
            && opt(d.mean_eif)
    }
}

/// Fitted `G_t` and `alpha_t`.
#[derive(Debug, Clone)]
pub struct Nuisances {
    pub g: GSequence,
    pub weights: WeightFit,
}

pub fn fold_plan(frame: &LongitudinalFrame, task: &TaskSpec) -> Result<FoldPlan> {
    make_folds(frame.n(), task.folds, derive_seed(task.seed, &[0]))
}

/// Fits `G_t` and the full `alpha_t` chain. Degraded times are not applied
/// here; see [`TaskSpec::degrade`].
pub fn fit_nuisances(frame: &LongitudinalFrame, task: &TaskSpec, plan: &FoldPlan) -> Result<Nuisances> {
    let g = fit_g_sequence(frame, &task.conditioning, &task.learners.big_g, plan, task.superlearner_folds, derive_seed(task.seed, &[1]))?;
    let weights = match task.riesz_mode {
        RieszMode::LossMinimization => {
            fit_riesz_sequence(frame, &task.policy, &g, &task.learners.alpha, plan, task.clip_alpha, derive_seed(task.seed, &[2]))?
        }
        RieszMode::PluginDiscrete => {
            fit_ratio_plugin_sequence(frame, &task.policy, &task.conditioning, &g, task.learners.treatment, plan, task.clip_alpha)?
        }
    };
    Ok(Nuisances { g, weights })
}

/// Average of `m_1(A_1^d, L_1)` over the conditioning stratum.
pub fn substitution_estimate(fits: &SequentialFits, in_stratum: &[bool]) -> Result<f64> {
    let (mut s, mut k) = (0.0, 0usize);
    for (v, &b) in fits.shifted[0].iter().zip(in_stratum) {
        if b {
            s += v;
            k += 1;
        }
    }
    if k == 0 {
        return Err(GattError::EmptyConditioningStratum);
    }
    Ok(s / k as f64)
}

/// `(1/n) sum alpha_tau Y`.
pub fn ipw_estimate(y: &[f64], alpha_tau: &[f64]) -> f64 {
    y.iter().zip(alpha_tau).map(|(a, b)| a * b).sum::<f64>() / y.len() as f64
}

/// TMLE output before packaging.
#[derive(Debug, Clone)]
pub struct TmleFit {
    pub theta: f64,
    pub eif: Vec<f64>,
    pub se: f64,
    pub fits: SequentialFits,
}

pub fn tmle(frame: &LongitudinalFrame, nuisances: &Nuisances, regressor: &dyn SequentialRegressor) -> Result<TmleFit> {
    let omega = targeting_weights(&nuisances.g, &nuisances.weights);
    let fits = fit_sequential_regressions(frame, &nuisances.g.indicators, regressor, Some(&omega))?;
    let theta = substitution_estimate(&fits, &nuisances.g.indicators[0])?;
    let eif = compute_eif(frame.outcome(), &nuisances.g, &nuisances.weights, &fits, theta);
    let (_, sd) = eif::mean_sd(&eif);
    let se = sd / (frame.n() as f64).sqrt();
    Ok(TmleFit { theta, eif, se, fits })
}

/// Runs every requested estimator with nuisances fitted from `task`.
pub fn estimate(frame: &LongitudinalFrame, task: &TaskSpec) -> Result<Vec<EstimateResult>> {
    task.validate(frame)?;
    let plan = fold_plan(frame, task)?;
    let needs_weights = task.estimators.iter().any(|e| *e != EstimatorKind::Sub);
    let nuisances = if needs_weights {
        let mut nu = fit_nuisances(frame, task, &plan)?;
        nu.weights.override_with_ones(&task.degrade.alpha_ones);
        Some(nu)
    } else {
        None
    };
    let results = estimate_with(frame, task, &plan, nuisances.as_ref())?;
    for r in &results {
        for w in &r.diagnostics.warnings {
            log::warn!("{:?}: {w}", r.estimator);
        }
    }
    Ok(results)
}

/// Runs the requested estimators given already-fitted nuisances (required
/// for IPW and TMLE).
pub fn estimate_with(
    frame: &LongitudinalFrame,
    task: &TaskSpec,
    plan: &FoldPlan,
    nuisances: Option<&Nuisances>,
) -> Result<Vec<EstimateResult>> {
    let pools = (1..=frame.tau()).map(|t| task.m_pool(t)).collect();
    let regressor = CrossFitRegressor::new(frame, &task.policy, pools, plan, task.superlearner_folds, derive_seed(task.seed, &[3]));
    estimate_with_regressor(frame, task, nuisances, &regressor)
}

pub fn estimate_with_regressor(
    frame: &LongitudinalFrame,
    task: &TaskSpec,
    nuisances: Option<&Nuisances>,
    regressor: &dyn SequentialRegressor,
) -> Result<Vec<EstimateResult>> {
    let indicators = crate::conditioning::indicator_table(frame, &task.conditioning);
    let n = frame.n();
    let n_conditioning = indicators[0].iter().filter(|&&b| b).count();
    if n_conditioning == 0 {
        return Err(GattError::EmptyConditioningStratum);
    }
    let mut warnings = Vec::new();
    let comparability_k = match validate_comparability(&task.policy, &task.conditioning) {
        Comparability::Valid { k } => Some(k),
        Comparability::Violation { reason, .. } => {
            warnings.push(format!("comparability condition violated: {reason}"));
            None
        }
    };
    let base = Diagnostics {
        g0_hat: n_conditioning as f64 / n as f64,
        alpha_max: Vec::new(),
        alpha: Vec::new(),
        mean_eif: None,
        epsilon: Vec::new(),
        ridge_fallback: false,
        comparability_k,
        warnings,
    };
    let weighted = |nu: &Nuisances| {
        let mut d = base.clone();
        d.g0_hat = nu.g.g0;
        d.alpha_max = nu.weights.summaries.iter().map(|s| s.max).collect();
        d.alpha = nu.weights.summaries.clone();
        d.ridge_fallback = nu.weights.ridged;
        if let Some(&max) = d.alpha_max.iter().max_by(|a, b| a.total_cmp(b)) {
            if max > LARGE_ALPHA {
                d.warnings.push(format!("large weights: max alpha {max:.3e}"));
            }
        }
        d
    };
    let require = |kind: EstimatorKind| {
        nuisances.ok_or_else(|| GattError::Config(format!("{kind:?} estimator needs fitted weights")))
    };

    let mut out = Vec::new();
    for &kind in &task.estimators {
        let result = match kind {
            EstimatorKind::Sub => {
                let fits = fit_sequential_regressions(frame, &indicators, regressor, None)?;
                let theta = substitution_estimate(&fits, &indicators[0])?;
                EstimateResult { estimator: kind, theta_hat: theta, se: None, ci: None, n, n_conditioning, diagnostics: base.clone(), eif: None, task: None }
            }
            EstimatorKind::Ipw => {
                let nu = require(kind)?;
                let theta = ipw_estimate(frame.outcome(), &nu.weights.observed[frame.tau() - 1]);
                EstimateResult { estimator: kind, theta_hat: theta, se: None, ci: None, n, n_conditioning, diagnostics: weighted(nu), eif: None, task: None }
            }
            EstimatorKind::Tmle => {
                let nu = require(kind)?;
                let fit = tmle(frame, nu, regressor)?;
                let mut d = weighted(nu);
                let (mean, sd) = eif::mean_sd(&fit.eif);
                d.mean_eif = Some(mean);
                d.epsilon = fit.fits.epsilon.clone();
                if mean.abs() > 1e-5 * sd {
                    d.warnings.push(format!("mean of the influence function is {mean:.3e}"));
                }
                EstimateResult {
                    estimator: kind,
                    theta_hat: fit.theta,
                    se: Some(fit.se),
                    ci: Some([fit.theta - Z_95 * fit.se, fit.theta + Z_95 * fit.se]),
                    n,
                    n_conditioning,
                    diagnostics: d,
                    eif: Some(fit.eif),
                    task: None,
                }
            }
        };
        if !result.is_finite() {
            return Err(GattError::Learner(format!("{kind:?} estimate contains non-finite values")));
        }
        out.push(result);
    }
    Ok(out)
}
