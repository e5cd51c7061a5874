//! Monte-Carlo counterfactual truth with natural-value tracking.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{PathState, StateView, StructuralModel};
use crate::conditioning::ConditioningSpec;
use crate::error::{GattError, Result};
use crate::policy::PolicySpec;
use crate::rng::derive_seed;

/// Smallest accepted number of draws.
pub const MIN_DRAWS: usize = 100_000;

const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub theta_true: f64,
    pub mc_se: f64,
    /// Draws whose natural treatments fell in the conditioning set.
    pub n_conditioning: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, y: f64) {
        self.count += 1;
        self.sum += y;
        self.sum_sq += y * y;
    }

    fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    fn truth(&self) -> Result<Truth> {
        if self.count == 0 {
            return Err(GattError::EmptyConditioningStratum);
        }
        let k = self.count as f64;
        let mean = self.sum / k;
        let var = ((self.sum_sq - k * mean * mean) / (k - 1.0).max(1.0)).max(0.0);
        Ok(Truth { theta_true: mean, mc_se: (var / k).sqrt(), n_conditioning: self.count })
    }
}

/// One intervened draw: the natural treatment values and the outcome under
/// the fully intervened trajectory.
pub fn draw_intervened(
    model: &dyn StructuralModel,
    policy: &PolicySpec,
    names: &[Vec<String>],
    rng: &mut ChaCha8Rng,
    state: &mut PathState,
    natural: &mut Vec<f64>,
) -> f64 {
    state.l.clear();
    state.a.clear();
    natural.clear();
    for t in 1..=model.tau() {
        let l = model.draw_covariates(t, state, rng);
        state.l.push(l);
        let a = model.draw_treatment(t, state, rng);
        natural.push(a);
        state.a.push(a);
        let d = policy.apply(t, a, &StateView { state, names });
        state.a[t - 1] = d;
    }
    model.draw_outcome(state, rng)
}

/// Truth for several conditioning specifications from one set of draws.
/// Chunks are seeded independently and merged in order, so the result does
/// not depend on the thread count.
pub fn compute_true_gatt_many(
    model: &dyn StructuralModel,
    policy: &PolicySpec,
    conditionings: &[ConditioningSpec],
    m: usize,
    seed: u64,
) -> Result<Vec<Truth>> {
    if m < MIN_DRAWS {
        return Err(GattError::Config(format!("truth needs at least {MIN_DRAWS} draws, got {m}")));
    }
    let tau = model.tau();
    if policy.tau() != tau || conditionings.iter().any(|c| c.tau() != tau) {
        return Err(GattError::Config(format!("policy and conditioning must have {tau} time points")));
    }
    let names: Vec<Vec<String>> = (1..=tau).map(|t| model.covariate_names(t)).collect();
    let chunks = m.div_ceil(CHUNK);
    let partials: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(m - c * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[c as u64]));
            let mut state = PathState::with_capacity(tau);
            let mut natural = Vec::with_capacity(tau);
            let mut acc = vec![Moments::default(); conditionings.len()];
            for _ in 0..len {
                let y = draw_intervened(model, policy, &names, &mut rng, &mut state, &mut natural);
                for (mom, cond) in acc.iter_mut().zip(conditionings) {
                    if natural.iter().enumerate().all(|(i, &a)| cond.sets[i].contains(a)) {
                        mom.push(y);
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); conditionings.len()];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total.iter().map(Moments::truth).collect()
}

pub fn compute_true_gatt(
    model: &dyn StructuralModel,
    policy: &PolicySpec,
    conditioning: &ConditioningSpec,
    m: usize,
    seed: u64,
) -> Result<Truth> {
    Ok(compute_true_gatt_many(model, policy, std::slice::from_ref(conditioning), m, seed)?[0])
}
