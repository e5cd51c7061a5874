use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GattError, Result};

/// Assignment of units to `J` cross-fitting folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub j: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

/// Seeded random partition: shuffle `0..n`, then unit at shuffled position `k`
/// goes to fold `k % J`. Fold sizes differ by at most one.
pub fn make_folds(n: usize, j: usize, seed: u64) -> Result<FoldPlan> {
    if j == 0 || j > n {
        return Err(GattError::Config(format!("fold count {j} must be in 1..={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut assignment = vec![0; n];
    for (pos, &unit) in order.iter().enumerate() {
        assignment[unit] = pos % j;
    }
    Ok(FoldPlan { j, assignment, seed })
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Cross-fitting disabled: one fold, trained and evaluated on all units.
    pub fn is_single(&self) -> bool {
        self.j == 1
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] == fold).collect()
    }

    /// Training units for `fold`; all units when cross-fitting is disabled.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        if self.is_single() {
            (0..self.n()).collect()
        } else {
            (0..self.n()).filter(|&i| self.assignment[i] != fold).collect()
        }
    }

    /// Folds restricted to a subset of units, renumbered `0..subset.len()`.
    pub fn restrict(&self, subset: &[usize]) -> FoldPlan {
        FoldPlan { j: self.j, assignment: subset.iter().map(|&i| self.assignment[i]).collect(), seed: self.seed }
    }
}
