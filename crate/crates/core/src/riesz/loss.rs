//! Direct estimation of the cumulated weights `alpha_t` by minimizing the
//! empirical Riesz loss
//! `mean[ a(A_t, H_t)^2 - 2 * alpha_{t-1} * 1{A_{t:tau} in B_{t:tau}} / G_{t-1} * a(A_t^d, H_t) ]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GSequence, WeightFit};
use crate::error::{GattError, Result};
use crate::frame::LongitudinalFrame;
use crate::learners::{
    expit, softplus, solve_symmetric, train_mlp, weighted_gram, Basis, FoldPlan, Head, Mlp, MlpParams, Objective,
};
use crate::policy::PolicySpec;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RieszCandidate {
    /// Linear in `[1, x, x_i x_j]`; solved in closed form.
    Linear {
        #[serde(default)]
        interaction_order: u8,
    },
    /// Network with a softplus output head, so evaluations are positive.
    Mlp {
        #[serde(default)]
        params: MlpParams,
    },
}

impl RieszCandidate {
    pub fn validate(&self) -> Result<()> {
        match self {
            RieszCandidate::Linear { interaction_order } if *interaction_order > 1 => {
                Err(GattError::Config("riesz interaction_order must be 0 or 1".into()))
            }
            RieszCandidate::Mlp { params } => params.validate().map_err(GattError::Config),
            _ => Ok(()),
        }
    }
}

/// Empirical Riesz loss of a candidate given its evaluations at the observed
/// and shifted treatments and the incoming weight
/// `alpha_{t-1} * indicator / G_{t-1}` per unit.
pub fn riesz_loss(at_observed: &[f64], at_shifted: &[f64], incoming: &[f64]) -> f64 {
    let n = at_observed.len() as f64;
    at_observed
        .iter()
        .zip(at_shifted)
        .zip(incoming)
        .map(|((a, b), w)| a * a - 2.0 * w * b)
        .sum::<f64>()
        / n
}

/// Incoming weights `alpha_{t-1} * 1{A_{t:tau} in B_{t:tau}} / G_{t-1}`.
pub fn incoming_weights(alpha_prev: &[f64], indicator: &[bool], g_prev: &[f64]) -> Vec<f64> {
    alpha_prev
        .iter()
        .zip(indicator)
        .zip(g_prev)
        .map(|((a, &ind), g)| if ind { a / g } else { 0.0 })
        .collect()
}

struct RieszObjective<'a> {
    incoming: &'a [f64],
}

impl Objective for RieszObjective<'_> {
    fn eval(&self, rows: &[usize], raw: &[Vec<f64>], grad: &mut [Vec<f64>]) -> f64 {
        let mut loss = 0.0;
        for (k, &i) in rows.iter().enumerate() {
            let (zo, zs) = (raw[0][k], raw[1][k]);
            let (a, b) = (softplus(zo), softplus(zs));
            let w = self.incoming[i];
            loss += a * a - 2.0 * w * b;
            grad[0][k] = 2.0 * a * expit(zo);
            grad[1][k] = -2.0 * w * expit(zs);
        }
        loss
    }
}

enum FoldModel {
    Linear { basis: Basis, beta: DVector<f64> },
    Mlp(Mlp),
}

impl FoldModel {
    fn eval(&self, x: &DMatrix<f64>) -> Vec<f64> {
        match self {
            FoldModel::Linear { basis, beta } => (basis.expand(x) * beta).iter().copied().collect(),
            FoldModel::Mlp(net) => net.predict(x),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_fold(
    candidate: &RieszCandidate,
    x_obs: &DMatrix<f64>,
    x_shift: &DMatrix<f64>,
    incoming: &[f64],
    train: &[usize],
    t: usize,
    seed: u64,
    ridged: &mut bool,
) -> Result<FoldModel> {
    match candidate {
        RieszCandidate::Linear { interaction_order } => {
            let basis = Basis { interaction_order: *interaction_order };
            let phi = basis.expand(&x_obs.select_rows(train));
            let phi_shift = basis.expand(&x_shift.select_rows(train));
            let m = train.len() as f64;
            let gram = weighted_gram(&phi, &vec![1.0 / m; train.len()]);
            let w = DVector::from_iterator(train.len(), train.iter().map(|&i| incoming[i] / m));
            let c = phi_shift.tr_mul(&w);
            let s = solve_symmetric(&gram, &c).ok_or(GattError::NonFiniteLoss { t })?;
            *ridged |= s.ridged;
            Ok(FoldModel::Linear { basis, beta: s.x })
        }
        RieszCandidate::Mlp { params } => {
            let views = [x_obs.clone(), x_shift.clone()];
            let objective = RieszObjective { incoming };
            let bias = (std::f64::consts::E - 1.0).ln();
            Ok(FoldModel::Mlp(train_mlp(params, &views, train, &objective, Head::Softplus, bias, seed)))
        }
    }
}

/// Fits `alpha_1, ..., alpha_tau` in increasing time. Training at time `t`
/// plugs in the held-out evaluations of `alpha_{t-1}` and `G_{t-1}`.
#[allow(clippy::too_many_arguments)]
pub fn fit_riesz_sequence(
    frame: &LongitudinalFrame,
    policy: &PolicySpec,
    g: &GSequence,
    candidate: &RieszCandidate,
    plan: &FoldPlan,
    clip: Option<f64>,
    seed: u64,
) -> Result<WeightFit> {
    let tau = frame.tau();
    let n = frame.n();
    let mut observed: Vec<Vec<f64>> = Vec::with_capacity(tau);
    let mut shifted: Vec<Vec<f64>> = Vec::with_capacity(tau);
    let mut ridged = false;
    for t in 1..=tau {
        let alpha_prev = if t == 1 { vec![1.0; n] } else { observed[t - 2].clone() };
        let incoming = incoming_weights(&alpha_prev, &g.indicators[t - 1], &g.observed_at(t - 1));
        let x_obs = frame.observed_design(t);
        let x_shift = frame.design(t, &policy.shifted_treatment(frame, t));
        let mut at_obs = vec![0.0; n];
        let mut at_shift = vec![0.0; n];
        for j in 0..plan.j {
            let train = plan.training(j);
            let model = fit_fold(candidate, &x_obs, &x_shift, &incoming, &train, t, derive_seed(seed, &[t as u64, j as u64]), &mut ridged)?;
            let train_obs = model.eval(&x_obs.select_rows(&train));
            let train_shift = model.eval(&x_shift.select_rows(&train));
            let train_in: Vec<f64> = train.iter().map(|&i| incoming[i]).collect();
            if !riesz_loss(&train_obs, &train_shift, &train_in).is_finite() {
                return Err(GattError::NonFiniteLoss { t });
            }
            let held = if plan.is_single() { train } else { plan.members(j) };
            let (ho, hs) = (model.eval(&x_obs.select_rows(&held)), model.eval(&x_shift.select_rows(&held)));
            for (k, &i) in held.iter().enumerate() {
                at_obs[i] = ho[k];
                at_shift[i] = hs[k];
            }
        }
        if let Some(c) = clip {
            at_obs.iter_mut().chain(at_shift.iter_mut()).for_each(|v| *v = v.clamp(-c, c));
        }
        if at_obs.iter().chain(&at_shift).any(|v| !v.is_finite()) {
            return Err(GattError::NonFiniteLoss { t });
        }
        observed.push(at_obs);
        shifted.push(at_shift);
    }
    Ok(WeightFit::new(observed, Some(shifted), ridged, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_candidate_loss() {
        let ones = vec![1.0; 4];
        for c in [0.0, 0.5, 1.0, 2.0] {
            let v = vec![c; 4];
            let loss = riesz_loss(&v, &v, &ones);
            assert!((loss - (c * c - 2.0 * c)).abs() < 1e-15);
        }
    }

    #[test]
    fn candidate_json() {
        let c: RieszCandidate = serde_json::from_str(r#"{"kind":"linear","interaction_order":1}"#).unwrap();
        assert_eq!(c, RieszCandidate::Linear { interaction_order: 1 });
        let m: RieszCandidate = serde_json::from_str(r#"{"kind":"mlp","params":{"epochs":5}}"#).unwrap();
        assert!(matches!(m, RieszCandidate::Mlp { params } if params.epochs == 5));
    }
}
