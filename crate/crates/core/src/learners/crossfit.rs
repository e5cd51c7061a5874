use nalgebra::DMatrix;
use serde::Serialize;

use super::{make_folds, select_superlearner, FittedModel, FoldPlan, LearnerSpec};
use crate::error::{GattError, Result};
use crate::frame::OutcomeFamily;
use crate::rng::derive_seed;

/// One fitted model per cross-fitting fold; unit `i` is always evaluated with
/// the model that did not see it.
#[derive(Debug, Clone, Serialize)]
pub struct CrossFitted {
    #[serde(skip)]
    assignment: Vec<usize>,
    pub models: Vec<FittedModel>,
    /// Index of the selected candidate per fold.
    pub chosen: Vec<usize>,
}

/// Fits `pool` by super learner within each training fold, using only
/// `eligible` units with positive weight.
#[allow(clippy::too_many_arguments)]
pub fn cross_fit(
    pool: &[LearnerSpec],
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    eligible: &[bool],
    family: OutcomeFamily,
    plan: &FoldPlan,
    sl_folds: usize,
    seed: u64,
) -> Result<CrossFitted> {
    let mut models = Vec::with_capacity(plan.j);
    let mut chosen = Vec::with_capacity(plan.j);
    for j in 0..plan.j {
        let train: Vec<usize> = plan.training(j).into_iter().filter(|&i| eligible[i] && w[i] > 0.0).collect();
        if train.is_empty() {
            return Err(GattError::Learner(format!("no eligible training units in fold {}", j + 1)));
        }
        let tx = x.select_rows(&train);
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let tw: Vec<f64> = train.iter().map(|&i| w[i]).collect();
        let fold_seed = derive_seed(seed, &[j as u64]);
        let inner = make_folds(train.len(), sl_folds.clamp(1, train.len()), fold_seed)?;
        let sel = select_superlearner(pool, &tx, &ty, &tw, family, &inner, fold_seed)?;
        models.push(sel.model);
        chosen.push(sel.chosen);
    }
    Ok(CrossFitted { assignment: plan.assignment.clone(), models, chosen })
}

impl CrossFitted {
    /// Held-out predictions for a design aligned with the units.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        assert_eq!(x.nrows(), self.assignment.len(), "design is not aligned with the fold plan");
        if self.models.len() == 1 {
            return self.models[0].predict(x);
        }
        let mut out = vec![0.0; x.nrows()];
        for (j, model) in self.models.iter().enumerate() {
            let rows: Vec<usize> = (0..x.nrows()).filter(|&i| self.assignment[i] == j).collect();
            if rows.is_empty() {
                continue;
            }
            for (k, p) in model.predict(&x.select_rows(&rows)).into_iter().enumerate() {
                out[rows[k]] = p;
            }
        }
        out
    }

    pub fn any_ridged(&self) -> bool {
        self.models.iter().any(|m| m.ridged)
    }
}
