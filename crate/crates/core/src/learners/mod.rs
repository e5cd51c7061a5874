//! Learner registry: intercept-only, polynomial GLMs and a small MLP, with
//! cross-validation folds, discrete super-learner selection and cross-fitting.

mod crossfit;
mod folds;
mod glm;
mod linalg;
mod mlp;
mod multinomial;
mod superlearner;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GattError, Result};
use crate::frame::OutcomeFamily;

pub use crossfit::{cross_fit, CrossFitted};
pub use folds::{make_folds, FoldPlan};
pub use glm::{Basis, GlmFit};
pub use mlp::{Head, Mlp, MlpParams};
pub use multinomial::{fit_multinomial, MultinomialFit};
pub use superlearner::{select_superlearner, Selection};

pub(crate) use glm::{expit, logit};
pub(crate) use linalg::{solve_symmetric, weighted_gram};
pub(crate) use mlp::{softplus, train as train_mlp, Objective};

/// Lower clamp for predicted probabilities.
pub const P_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    InterceptOnly,
    Glm,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// GLM only: 1 adds all pairwise products of the inputs.
    #[serde(default)]
    pub interaction_order: u8,
    #[serde(default)]
    pub mlp: MlpParams,
}

impl LearnerSpec {
    pub fn intercept_only() -> Self {
        Self { kind: LearnerKind::InterceptOnly, interaction_order: 0, mlp: MlpParams::default() }
    }

    pub fn glm(interaction_order: u8) -> Self {
        Self { kind: LearnerKind::Glm, interaction_order, mlp: MlpParams::default() }
    }

    pub fn mlp(params: MlpParams) -> Self {
        Self { kind: LearnerKind::Mlp, interaction_order: 0, mlp: params }
    }

    pub fn validate(&self) -> Result<()> {
        if self.interaction_order > 1 {
            return Err(GattError::Config("interaction_order must be 0 or 1".into()));
        }
        if self.kind == LearnerKind::Mlp {
            self.mlp.validate().map_err(GattError::Config)?;
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.kind {
            LearnerKind::InterceptOnly => "intercept_only".into(),
            LearnerKind::Glm if self.interaction_order == 1 => "glm_pairwise".into(),
            LearnerKind::Glm => "glm".into(),
            LearnerKind::Mlp => format!("mlp_{}", self.mlp.hidden_units),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Fitted {
    Constant(f64),
    Glm(GlmFit),
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedModel {
    pub kind: LearnerKind,
    pub family: OutcomeFamily,
    pub inputs: usize,
    pub fitted: Fitted,
    /// Set when a singular system needed the ridge fallback.
    pub ridged: bool,
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<()> {
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(GattError::Learner(format!(
            "design has {} rows but {} responses and {} weights",
            x.nrows(),
            y.len(),
            w.len()
        )));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(GattError::Learner("weights must be finite and nonnegative".into()));
    }
    if !w.iter().any(|v| *v > 0.0) {
        return Err(GattError::Learner("all weights are zero".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(GattError::Learner("non-finite training data".into()));
    }
    Ok(())
}

pub fn fit(spec: &LearnerSpec, x: &DMatrix<f64>, y: &[f64], w: &[f64], family: OutcomeFamily, seed: u64) -> Result<FittedModel> {
    check_inputs(x, y, w)?;
    let wsum: f64 = w.iter().sum();
    let mean = w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let (fitted, ridged) = match spec.kind {
        LearnerKind::InterceptOnly => (Fitted::Constant(mean), false),
        LearnerKind::Glm => {
            let g = glm::fit_glm(Basis { interaction_order: spec.interaction_order }, x, y, w, family)?;
            let ridged = g.ridged;
            (Fitted::Glm(g), ridged)
        }
        LearnerKind::Mlp => {
            let head = match family {
                OutcomeFamily::Gaussian => Head::Identity,
                OutcomeFamily::Binomial => Head::Logistic,
            };
            let bias = match family {
                OutcomeFamily::Gaussian => mean,
                OutcomeFamily::Binomial => logit(mean.clamp(P_MIN, 1.0 - P_MIN)),
            };
            let rows: Vec<usize> = (0..y.len()).collect();
            let objective = mlp::RegressionObjective { y, w, head };
            let net = mlp::train(&spec.mlp, std::slice::from_ref(x), &rows, &objective, head, bias, seed);
            (Fitted::Mlp(net), false)
        }
    };
    Ok(FittedModel { kind: spec.kind, family, inputs: x.ncols(), fitted, ridged })
}

impl FittedModel {
    /// Predictions on the response scale; binomial predictions are clamped
    /// to `[P_MIN, 1 - P_MIN]`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        assert_eq!(x.ncols(), self.inputs, "prediction design does not match the training schema");
        let raw: Vec<f64> = match (&self.fitted, self.family) {
            (Fitted::Constant(c), _) => vec![*c; x.nrows()],
            (Fitted::Glm(g), OutcomeFamily::Gaussian) => g.linear_predictor(x),
            (Fitted::Glm(g), OutcomeFamily::Binomial) => g.linear_predictor(x).into_iter().map(expit).collect(),
            (Fitted::Mlp(net), _) => net.predict(x),
        };
        match self.family {
            OutcomeFamily::Gaussian => raw,
            OutcomeFamily::Binomial => raw.into_iter().map(|p| p.clamp(P_MIN, 1.0 - P_MIN)).collect(),
        }
    }
}

/// Per-unit loss used for model selection: squared error or Bernoulli
/// negative log-likelihood.
pub(crate) fn unit_loss(family: OutcomeFamily, y: f64, pred: f64) -> f64 {
    match family {
        OutcomeFamily::Gaussian => (y - pred) * (y - pred),
        OutcomeFamily::Binomial => -(y * pred.ln() + (1.0 - y) * (1.0 - pred).ln()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn intercept_only_is_weighted_mean() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        let m = fit(&LearnerSpec::intercept_only(), &x, &[1.0, 2.0, 3.0], &[1.0; 3], OutcomeFamily::Gaussian, 0).unwrap();
        assert_eq!(m.predict(&x), vec![2.0; 3]);
    }

    #[test]
    fn separable_logistic_is_clamped() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let m = fit(&LearnerSpec::glm(0), &x, &y, &[1.0; 6], OutcomeFamily::Binomial, 0).unwrap();
        let p = m.predict(&x);
        assert!(p.iter().all(|v| v.is_finite() && *v >= P_MIN && *v <= 1.0 - P_MIN));
        assert!(p[0] < 1e-3 && p[5] > 1.0 - 1e-3);
    }

    #[test]
    fn zero_weights_rejected() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(fit(&LearnerSpec::glm(0), &x, &[0.0, 1.0], &[0.0, 0.0], OutcomeFamily::Gaussian, 0).is_err());
    }

    #[test]
    fn collinear_design_flags_ridge() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let m = fit(&LearnerSpec::glm(0), &x, &[1.0, 2.0, 3.0, 4.0], &[1.0; 4], OutcomeFamily::Gaussian, 0).unwrap();
        assert!(m.ridged);
        let p = m.predict(&x);
        assert!((p[3] - 4.0).abs() < 1e-4);
    }

    #[test]
    fn spec_json() {
        let s: LearnerSpec = serde_json::from_str(r#"{"kind":"mlp","mlp":{"epochs":10}}"#).unwrap();
        assert_eq!(s.mlp.epochs, 10);
        assert_eq!(s.mlp.hidden_units, 25);
        assert!(serde_json::from_str::<LearnerSpec>(r#"{"kind":"glm","order":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn duplicating_a_row_equals_doubling_its_weight(
            xs in proptest::collection::vec(-3.0..3.0f64, 8),
            ys in proptest::collection::vec(0.0..1.0f64, 8),
            dup in 0usize..8,
            binomial: bool,
        ) {
            let family = if binomial { OutcomeFamily::Binomial } else { OutcomeFamily::Gaussian };
            let x = DMatrix::from_column_slice(8, 1, &xs);
            let mut w = vec![1.0; 8];
            w[dup] = 2.0;
            let weighted = fit(&LearnerSpec::glm(0), &x, &ys, &w, family, 0).unwrap();
            let mut xd = xs.clone();
            xd.push(xs[dup]);
            let mut yd = ys.clone();
            yd.push(ys[dup]);
            let duplicated = fit(&LearnerSpec::glm(0), &DMatrix::from_column_slice(9, 1, &xd), &yd, &[1.0; 9], family, 0).unwrap();
            for (a, b) in weighted.predict(&x).iter().zip(duplicated.predict(&x)) {
                prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
            }
        }

        #[test]
        fn predictions_respect_family_bounds(
            xs in proptest::collection::vec(-50.0..50.0f64, 10),
            ys in proptest::collection::vec(0u8..2, 10),
        ) {
            let x = DMatrix::from_column_slice(10, 1, &xs);
            let y: Vec<f64> = ys.iter().map(|&v| v as f64).collect();
            let m = fit(&LearnerSpec::glm(0), &x, &y, &[1.0; 10], OutcomeFamily::Binomial, 0).unwrap();
            prop_assert!(m.predict(&x).iter().all(|p| *p >= P_MIN && *p <= 1.0 - P_MIN));
            let g = fit(&LearnerSpec::glm(1), &x, &y, &[1.0; 10], OutcomeFamily::Gaussian, 0).unwrap();
            prop_assert!(g.predict(&x).iter().all(|p| p.is_finite()));
        }
    }
}
