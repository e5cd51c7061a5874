//! Plug-in ratio weights for discrete treatments: fit `g_t(a | h)`, form
//! `r_t = g^d_{t,B} / g_t` and cumulate `alpha_t = prod_{k <= t} r_k`.

use nalgebra::DMatrix;

use super::{GSequence, WeightFit};
use crate::error::{GattError, Result};
use crate::frame::LongitudinalFrame;
use crate::learners::{fit_multinomial, Basis, FoldPlan};
use crate::policy::PolicySpec;

/// Treatments with more distinct values than this are treated as continuous.
pub const MAX_DISCRETE_LEVELS: usize = 32;

pub(crate) fn support(values: &[f64]) -> Vec<f64> {
    let mut levels: Vec<f64> = values.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
}

/// Cross-fitted `g_t(level | H_t)` per unit; rows align with units.
fn cross_fitted_pmf(
    frame: &LongitudinalFrame,
    t: usize,
    levels: &[f64],
    basis: Basis,
    plan: &FoldPlan,
    clamped: &mut usize,
) -> Result<DMatrix<f64>> {
    let n = frame.n();
    if levels.len() == 1 {
        return Ok(DMatrix::from_element(n, 1, 1.0));
    }
    let x = frame.history_design(t);
    let a = frame.treatment(t);
    let mut pmf = DMatrix::zeros(n, levels.len());
    for j in 0..plan.j {
        let train = plan.training(j);
        let ta: Vec<f64> = train.iter().map(|&i| a[i]).collect();
        let fit = fit_multinomial(basis, &x.select_rows(&train), &ta, &vec![1.0; train.len()], levels)?;
        let held = if plan.is_single() { train } else { plan.members(j) };
        let (p, c) = fit.predict_pmf(&x.select_rows(&held));
        *clamped += c;
        for (k, &i) in held.iter().enumerate() {
            pmf.row_mut(i).copy_from(&p.row(k));
        }
    }
    Ok(pmf)
}

/// Per-unit ratios `r_t` at the observed treatment.
pub fn ratio_at(
    frame: &LongitudinalFrame,
    policy: &PolicySpec,
    g: &GSequence,
    t: usize,
    levels: &[f64],
    pmf: &DMatrix<f64>,
    set: &crate::conditioning::TreatmentSet,
) -> Vec<f64> {
    let n = frame.n();
    let a = frame.treatment(t);
    let g_prev = g.observed_at(t - 1);
    let mut numerator = vec![0.0; n];
    for (c, &level) in levels.iter().enumerate() {
        if !set.contains(level) {
            continue;
        }
        let g_level = g.evaluate(frame, t, &vec![level; n]);
        for i in 0..n {
            if policy.apply(t, level, &frame.history(i, t)) == a[i] {
                numerator[i] += g_level[i] / g_prev[i] * pmf[(i, c)];
            }
        }
    }
    (0..n)
        .map(|i| {
            let c = levels.iter().position(|&l| l == a[i]).expect("observed level in support");
            numerator[i] / pmf[(i, c)]
        })
        .collect()
}

pub fn fit_ratio_plugin_sequence(
    frame: &LongitudinalFrame,
    policy: &PolicySpec,
    conditioning: &crate::conditioning::ConditioningSpec,
    g: &GSequence,
    basis: Basis,
    plan: &FoldPlan,
    clip: Option<f64>,
) -> Result<WeightFit> {
    let tau = frame.tau();
    let mut observed: Vec<Vec<f64>> = Vec::with_capacity(tau);
    let mut clamped = 0;
    for t in 1..=tau {
        let levels = support(frame.treatment(t));
        if levels.len() > MAX_DISCRETE_LEVELS {
            return Err(GattError::ContinuousTreatment { t });
        }
        let pmf = cross_fitted_pmf(frame, t, &levels, basis, plan, &mut clamped)?;
        let r = ratio_at(frame, policy, g, t, &levels, &pmf, conditioning.set(t));
        let mut alpha: Vec<f64> = match observed.last() {
            Some(prev) => prev.iter().zip(&r).map(|(a, b)| a * b).collect(),
            None => r,
        };
        if let Some(c) = clip {
            alpha.iter_mut().for_each(|v| *v = v.clamp(-c, c));
        }
        observed.push(alpha);
    }
    if clamped > 0 {
        log::warn!("{clamped} treatment probabilities were floored at the clamp bound");
    }
    Ok(WeightFit::new(observed, None, false, clamped))
}
