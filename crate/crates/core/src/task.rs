//! Estimation task: what to estimate and how to fit the nuisances.

use serde::{Deserialize, Serialize};

use crate::conditioning::ConditioningSpec;
use crate::error::{GattError, Result};
use crate::frame::LongitudinalFrame;
use crate::learners::{Basis, LearnerSpec};
use crate::policy::PolicySpec;
use crate::riesz::{RieszCandidate, RieszMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Sub,
    Ipw,
    Tmle,
}

fn default_m_pool() -> Vec<LearnerSpec> {
    vec![LearnerSpec::intercept_only(), LearnerSpec::glm(0)]
}

fn default_g_pool() -> Vec<LearnerSpec> {
    vec![LearnerSpec::intercept_only(), LearnerSpec::glm(0), LearnerSpec::glm(1)]
}

fn default_alpha() -> RieszCandidate {
    RieszCandidate::Linear { interaction_order: 1 }
}

fn default_treatment_basis() -> Basis {
    Basis::main_effects()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// Super-learner pool for the sequential regressions `m_t`.
    #[serde(default = "default_m_pool")]
    pub m: Vec<LearnerSpec>,
    /// Super-learner pool for the conditioning probabilities `G_t`.
    #[serde(rename = "G", default = "default_g_pool")]
    pub big_g: Vec<LearnerSpec>,
    /// Candidate space for the Riesz loss path.
    #[serde(default = "default_alpha")]
    pub alpha: RieszCandidate,
    /// Treatment-probability model for the plug-in ratio path.
    #[serde(rename = "g", default = "default_treatment_basis")]
    pub treatment: Basis,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self { m: default_m_pool(), big_g: default_g_pool(), alpha: default_alpha(), treatment: default_treatment_basis() }
    }
}

/// Deliberate misspecification used by the simulation scenarios.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Degrade {
    /// Times at which `m_t` is fit by an intercept-only model.
    #[serde(default)]
    pub m_intercept_only: Vec<usize>,
    /// Times at which `alpha_t` is replaced by one.
    #[serde(default)]
    pub alpha_ones: Vec<usize>,
}

impl Degrade {
    pub fn is_empty(&self) -> bool {
        self.m_intercept_only.is_empty() && self.alpha_ones.is_empty()
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Sub, EstimatorKind::Ipw, EstimatorKind::Tmle]
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub policy: PolicySpec,
    pub conditioning: ConditioningSpec,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub riesz_mode: RieszMode,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_folds")]
    pub superlearner_folds: usize,
    #[serde(default)]
    pub learners: LearnerConfig,
    #[serde(default)]
    pub clip_alpha: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Degrade::is_empty")]
    pub degrade: Degrade,
}

impl TaskSpec {
    pub fn new(policy: PolicySpec, conditioning: ConditioningSpec) -> Self {
        Self {
            policy,
            conditioning,
            estimators: default_estimators(),
            riesz_mode: RieszMode::default(),
            folds: default_folds(),
            superlearner_folds: default_folds(),
            learners: LearnerConfig::default(),
            clip_alpha: None,
            seed: 0,
            degrade: Degrade::default(),
        }
    }

    pub fn tau(&self) -> usize {
        self.policy.tau()
    }

    /// Checks that do not need data.
    pub fn validate_spec(&self) -> Result<()> {
        let tau = self.tau();
        if tau == 0 {
            return Err(GattError::Config("policy must have at least one time point".into()));
        }
        if self.conditioning.tau() != tau {
            return Err(GattError::Config(format!(
                "policy has {tau} rules but conditioning has {} sets",
                self.conditioning.tau()
            )));
        }
        if self.folds == 0 || self.superlearner_folds == 0 {
            return Err(GattError::Config("folds and superlearner_folds must be at least 1".into()));
        }
        if let Some(c) = self.clip_alpha {
            if !(c > 0.0 && c.is_finite()) {
                return Err(GattError::Config("clip_alpha must be positive".into()));
            }
        }
        if self.estimators.is_empty() {
            return Err(GattError::Config("no estimators requested".into()));
        }
        if self.learners.m.is_empty() || self.learners.big_g.is_empty() {
            return Err(GattError::Config("learner pools must not be empty".into()));
        }
        for spec in self.learners.m.iter().chain(&self.learners.big_g) {
            spec.validate()?;
        }
        self.learners.alpha.validate()?;
        if self.learners.treatment.interaction_order > 1 {
            return Err(GattError::Config("treatment model interaction_order must be 0 or 1".into()));
        }
        for &t in self.degrade.m_intercept_only.iter().chain(&self.degrade.alpha_ones) {
            if t == 0 || t > tau {
                return Err(GattError::Config(format!("degrade time {t} is outside 1..={tau}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self, frame: &LongitudinalFrame) -> Result<()> {
        self.validate_spec()?;
        self.policy.validate(frame)?;
        self.conditioning.validate(frame)?;
        if self.folds > frame.n() {
            return Err(GattError::Config(format!("{} folds for {} units", self.folds, frame.n())));
        }
        Ok(())
    }

    /// Learner pool for `m_t`, honoring the degrade list.
    pub fn m_pool(&self, t: usize) -> Vec<LearnerSpec> {
        if self.degrade.m_intercept_only.contains(&t) {
            vec![LearnerSpec::intercept_only()]
        } else {
            self.learners.m.clone()
        }
    }
}
