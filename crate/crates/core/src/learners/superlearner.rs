use nalgebra::DMatrix;
use serde::Serialize;

use super::{fit, unit_loss, FittedModel, FoldPlan, LearnerSpec};
use crate::error::{GattError, Result};
use crate::frame::OutcomeFamily;
use crate::rng::derive_seed;

/// Outcome of discrete super-learner selection.
#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub model: FittedModel,
    pub chosen: usize,
    /// Weighted cross-validated loss per candidate; `None` when the
    /// candidate failed or CV was skipped.
    pub cv_loss: Vec<Option<f64>>,
}

fn cv_loss(
    spec: &LearnerSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    family: OutcomeFamily,
    folds: &FoldPlan,
    seed: u64,
) -> Result<f64> {
    let (mut total, mut wsum) = (0.0, 0.0);
    for v in 0..folds.j {
        let train = folds.training(v);
        let test = folds.members(v);
        let tw: Vec<f64> = train.iter().map(|&i| w[i]).collect();
        if !tw.iter().any(|&v| v > 0.0) {
            continue;
        }
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = fit(spec, &x.select_rows(&train), &ty, &tw, family, derive_seed(seed, &[v as u64]))?;
        let pred = model.predict(&x.select_rows(&test));
        for (k, &i) in test.iter().enumerate() {
            total += w[i] * unit_loss(family, y[i], pred[k]);
            wsum += w[i];
        }
    }
    if wsum <= 0.0 || !total.is_finite() {
        return Err(GattError::Learner("cross-validated loss is undefined".into()));
    }
    Ok(total / wsum)
}

/// Picks the candidate with the smallest V-fold CV loss (first wins ties)
/// and refits it on all rows.
pub fn select_superlearner(
    specs: &[LearnerSpec],
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    family: OutcomeFamily,
    folds: &FoldPlan,
    seed: u64,
) -> Result<Selection> {
    if specs.is_empty() {
        return Err(GattError::Config("super learner needs at least one candidate".into()));
    }
    let refit_seed = derive_seed(seed, &[u64::MAX]);
    if specs.len() == 1 {
        let model = fit(&specs[0], x, y, w, family, refit_seed)?;
        return Ok(Selection { model, chosen: 0, cv_loss: vec![None] });
    }
    let losses: Vec<Option<f64>> = specs
        .iter()
        .enumerate()
        .map(|(k, s)| cv_loss(s, x, y, w, family, folds, derive_seed(seed, &[k as u64])).ok())
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (k, loss) in losses.iter().enumerate() {
        if let Some(l) = loss {
            if best.is_none_or(|(_, b)| *l < b) {
                best = Some((k, *l));
            }
        }
    }
    let (chosen, _) = best.ok_or_else(|| GattError::Learner("every super-learner candidate failed".into()))?;
    let model = fit(&specs[chosen], x, y, w, family, refit_seed)?;
    Ok(Selection { model, chosen, cv_loss: losses })
}
