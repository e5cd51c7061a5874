//! JSON configuration files for the command-line tool and the FFI.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conditioning::{ConditioningSpec, TreatmentSet};
use crate::error::{GattError, Result};
use crate::frame::{LongitudinalFrame, OutcomeFamily};
use crate::policy::PolicySpec;
use crate::riesz::RieszMode;
use crate::simlab::dgp::{simulate, DgpSpec};
use crate::simlab::harness::PolicyTemplate;
use crate::simlab::oracle::MIN_DRAWS;
use crate::task::{EstimatorKind, LearnerConfig, TaskSpec};

/// Where the data comes from: a CSV path, or a simulated draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Csv(PathBuf),
    Simulate {
        simulate: DgpSpec,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
}

/// Conditioning sets listed per time point, or keyed by time with the
/// unlisted times trivial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConditioningTemplate {
    PerTime(Vec<TreatmentSet>),
    /// Keys are decimal time points; kept as strings because untagged
    /// enums cannot parse integer map keys.
    ByTime(BTreeMap<String, TreatmentSet>),
}

impl ConditioningTemplate {
    pub fn resolve(&self, tau: usize) -> Result<ConditioningSpec> {
        match self {
            ConditioningTemplate::PerTime(sets) if sets.len() == tau => Ok(ConditioningSpec::new(sets.clone())),
            ConditioningTemplate::PerTime(sets) => Err(GattError::Config(format!(
                "conditioning has {} sets but the data has {tau} time points",
                sets.len()
            ))),
            ConditioningTemplate::ByTime(map) => {
                let mut entries = Vec::with_capacity(map.len());
                for (key, set) in map {
                    let t: usize = key
                        .trim()
                        .parse()
                        .map_err(|_| GattError::Config(format!("conditioning key '{key}' is not a time point")))?;
                    if t == 0 || t > tau {
                        return Err(GattError::Config(format!("conditioning time {t} is outside 1..={tau}")));
                    }
                    entries.push((t, set.clone()));
                }
                Ok(ConditioningSpec::at(tau, entries))
            }
        }
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Sub, EstimatorKind::Ipw, EstimatorKind::Tmle]
}

fn five() -> usize {
    5
}

/// Estimation config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub data: DataSource,
    /// Checked against the data when given.
    #[serde(default)]
    pub tau: Option<usize>,
    /// Required for CSV data; simulated data carries its own family.
    #[serde(default)]
    pub outcome_family: Option<OutcomeFamily>,
    pub policy: PolicyTemplate,
    #[serde(default)]
    pub conditioning: Option<ConditioningTemplate>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub riesz_mode: RieszMode,
    #[serde(default = "five")]
    pub folds: usize,
    #[serde(default = "five")]
    pub superlearner_folds: usize,
    #[serde(default)]
    pub learners: LearnerConfig,
    #[serde(default)]
    pub clip_alpha: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| GattError::Config(format!("cannot open {}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

impl TaskConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Loads the data. Relative CSV paths resolve against `base`.
    pub fn load_frame(&self, base: Option<&Path>) -> Result<LongitudinalFrame> {
        let frame = match &self.data {
            DataSource::Csv(p) => {
                let family = self
                    .outcome_family
                    .ok_or_else(|| GattError::Config("outcome_family is required for CSV data".into()))?;
                let path = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                let file = File::open(&path).map_err(|e| GattError::Config(format!("cannot open {}: {e}", path.display())))?;
                LongitudinalFrame::from_csv(BufReader::new(file), family)?
            }
            DataSource::Simulate { simulate: dgp, n, seed } => {
                dgp.validate()?;
                let frame = simulate(dgp.model().as_ref(), *n, *seed)?;
                if let Some(f) = self.outcome_family {
                    if f != frame.family() {
                        return Err(GattError::Config("outcome_family does not match the simulated law".into()));
                    }
                }
                frame
            }
        };
        if let Some(tau) = self.tau {
            if tau != frame.tau() {
                return Err(GattError::Config(format!("config tau = {tau} but the data has {} time points", frame.tau())));
            }
        }
        Ok(frame)
    }

    pub fn task(&self, tau: usize) -> Result<TaskSpec> {
        let policy = self.policy.resolve(tau)?;
        let conditioning = match &self.conditioning {
            Some(c) => c.resolve(tau)?,
            None => ConditioningSpec::trivial(tau),
        };
        let mut task = TaskSpec::new(policy, conditioning);
        task.estimators = self.estimators.clone();
        task.riesz_mode = self.riesz_mode;
        task.folds = self.folds;
        task.superlearner_folds = self.superlearner_folds;
        task.learners = self.learners.clone();
        task.clip_alpha = self.clip_alpha;
        task.seed = self.seed;
        task.validate_spec()?;
        Ok(task)
    }

    /// Checks everything that does not need the data itself.
    pub fn validate(&self) -> Result<()> {
        if let Some(tau) = self.tau {
            self.task(tau)?;
        }
        if let DataSource::Simulate { simulate: dgp, n, .. } = &self.data {
            dgp.validate()?;
            if *n == 0 {
                return Err(GattError::Config("n must be at least 1".into()));
            }
            self.task(dgp.tau())?;
        }
        if matches!(self.data, DataSource::Csv(_)) && self.outcome_family.is_none() {
            return Err(GattError::Config("outcome_family is required for CSV data".into()));
        }
        Ok(())
    }
}

/// Truth config file for the Monte-Carlo oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub dgp: DgpSpec,
    pub policy: PolicyTemplate,
    #[serde(default)]
    pub conditioning: Option<ConditioningTemplate>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_draws() -> usize {
    1_000_000
}

impl TruthConfig {
    pub fn resolve(&self) -> Result<(PolicySpec, ConditioningSpec)> {
        self.dgp.validate()?;
        if self.draws < MIN_DRAWS {
            return Err(GattError::Config(format!("truth needs at least {MIN_DRAWS} draws")));
        }
        let tau = self.dgp.tau();
        let policy = self.policy.resolve(tau)?;
        let conditioning = match &self.conditioning {
            Some(c) => c.resolve(tau)?,
            None => ConditioningSpec::trivial(tau),
        };
        Ok((policy, conditioning))
    }
}
