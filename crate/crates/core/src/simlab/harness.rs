//! Replication harness: repeated simulate-and-estimate over a grid of arms,
//! conditioning sets, scenarios and sample sizes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{simulate, DgpSpec};
use super::oracle::{compute_true_gatt_many, Truth};
use super::scenario::Scenario;
use crate::conditioning::{ConditioningSpec, TreatmentSet};
use crate::error::{GattError, Result};
use crate::estimators::{estimate_with, fit_nuisances, fold_plan, EstimateResult};
use crate::learners::Basis;
use crate::policy::{PolicyRule, PolicySpec};
use crate::riesz::{RieszCandidate, RieszMode};
use crate::rng::derive_seed;
use crate::task::{EstimatorKind, LearnerConfig, TaskSpec};

/// A policy given per time point, or one rule used at every time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyTemplate {
    PerTime(PolicySpec),
    Uniform(PolicyRule),
}

impl PolicyTemplate {
    pub fn resolve(&self, tau: usize) -> Result<PolicySpec> {
        match self {
            PolicyTemplate::PerTime(p) if p.tau() == tau => Ok(p.clone()),
            PolicyTemplate::PerTime(p) => {
                Err(GattError::Config(format!("policy has {} rules but the law has {tau} time points", p.tau())))
            }
            PolicyTemplate::Uniform(rule) => Ok(PolicySpec::uniform(rule.clone(), tau)),
        }
    }
}

/// Conditioning sets keyed by time; unlisted times are trivial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningArm {
    pub label: String,
    #[serde(default)]
    pub sets: BTreeMap<usize, TreatmentSet>,
    /// Known truth; computed by the oracle when absent.
    #[serde(default)]
    pub truth: Option<Truth>,
}

impl ConditioningArm {
    pub fn resolve(&self, tau: usize) -> Result<ConditioningSpec> {
        if let Some(&t) = self.sets.keys().find(|&&t| t == 0 || t > tau) {
            return Err(GattError::Config(format!("conditioning '{}' sets time {t} outside 1..={tau}", self.label)));
        }
        Ok(ConditioningSpec::at(tau, self.sets.iter().map(|(&t, s)| (t, s.clone()))))
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Sub, EstimatorKind::Ipw, EstimatorKind::Tmle]
}

fn five() -> usize {
    5
}

/// Estimation settings shared by every cell of an arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTemplate {
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
}

impl Default for TaskTemplate {
    fn default() -> Self {
        Self {
            estimators: default_estimators(),
            riesz_mode: RieszMode::default(),
            folds: 5,
            superlearner_folds: 5,
            learners: LearnerConfig::default(),
            clip_alpha: None,
        }
    }
}

impl TaskTemplate {
    pub fn task(&self, policy: PolicySpec, conditioning: ConditioningSpec, seed: u64) -> TaskSpec {
        let mut t = TaskSpec::new(policy, conditioning);
        t.estimators = self.estimators.clone();
        t.riesz_mode = self.riesz_mode;
        t.folds = self.folds;
        t.superlearner_folds = self.superlearner_folds;
        t.learners = self.learners.clone();
        t.clip_alpha = self.clip_alpha;
        t.seed = seed;
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub label: String,
    pub dgp: DgpSpec,
    pub policy: PolicyTemplate,
    pub conditionings: Vec<ConditioningArm>,
    #[serde(default)]
    pub task: TaskTemplate,
}

fn default_scenarios() -> Vec<Scenario> {
    vec![Scenario::AllConsistent]
}

fn default_replicates() -> usize {
    200
}

fn default_truth_draws() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub name: String,
    pub arms: Vec<ArmSpec>,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<Scenario>,
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() || self.sample_sizes.is_empty() || self.scenarios.is_empty() {
            return Err(GattError::Config("study needs at least one arm, sample size and scenario".into()));
        }
        if self.replicates == 0 {
            return Err(GattError::Config("replicates must be at least 1".into()));
        }
        for arm in &self.arms {
            arm.dgp.validate()?;
            let tau = arm.dgp.tau();
            let policy = arm.policy.resolve(tau)?;
            if arm.conditionings.is_empty() {
                return Err(GattError::Config(format!("arm '{}' has no conditioning sets", arm.label)));
            }
            for c in &arm.conditionings {
                let task = arm.task.task(policy.clone(), c.resolve(tau)?, 0);
                task.validate_spec()?;
            }
            if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < arm.task.folds.max(2)) {
                return Err(GattError::Config(format!("sample size {n} is smaller than the fold count")));
            }
        }
        Ok(())
    }

    /// The sim1 consistency grid with the default learners.
    pub fn sim1(conditions: &[f64], scenarios: Vec<Scenario>, sample_sizes: Vec<usize>, replicates: usize, seed: u64) -> Self {
        let conditionings = conditions
            .iter()
            .map(|&a| ConditioningArm {
                label: format!("{{{a}}}"),
                sets: BTreeMap::from([(4, TreatmentSet::value(a))]),
                truth: None,
            })
            .collect();
        StudyConfig {
            name: "sim1".into(),
            arms: vec![ArmSpec {
                label: "sim1".into(),
                dgp: DgpSpec::Sim1,
                policy: PolicyTemplate::Uniform(PolicyRule::ThresholdShift {
                    delta: -1.0,
                    comparator: crate::policy::Comparator::Ge,
                    threshold: 1.0,
                }),
                conditionings,
                task: TaskTemplate::default(),
            }],
            scenarios,
            sample_sizes,
            replicates,
            seed,
            truth_draws: 10_000_000,
        }
    }

    /// Loss-path versus plug-in weights on sim2 for each horizon.
    pub fn sim2(taus: &[usize], sample_sizes: Vec<usize>, replicates: usize, seed: u64) -> Self {
        let mut arms = Vec::new();
        for &tau in taus {
            for mode in [RieszMode::LossMinimization, RieszMode::PluginDiscrete] {
                let label = match mode {
                    RieszMode::LossMinimization => format!("loss tau={tau}"),
                    RieszMode::PluginDiscrete => format!("plugin tau={tau}"),
                };
                let task = TaskTemplate {
                    estimators: vec![EstimatorKind::Tmle],
                    riesz_mode: mode,
                    learners: LearnerConfig {
                        alpha: RieszCandidate::Linear { interaction_order: 0 },
                        treatment: Basis::main_effects(),
                        ..LearnerConfig::default()
                    },
                    ..TaskTemplate::default()
                };
                arms.push(ArmSpec {
                    label,
                    dgp: DgpSpec::Sim2 { tau, sigma: 1.0 },
                    policy: PolicyTemplate::Uniform(PolicyRule::Constant { value: 1.0 }),
                    conditionings: vec![ConditioningArm {
                        label: "trivial".into(),
                        sets: BTreeMap::new(),
                        truth: Some(Truth {
                            theta_true: super::dgp::Sim2::analytic_truth(tau),
                            mc_se: 0.0,
                            n_conditioning: 0,
                        }),
                    }],
                    task,
                });
            }
        }
        StudyConfig {
            name: "sim2".into(),
            arms,
            scenarios: default_scenarios(),
            sample_sizes,
            replicates,
            seed,
            truth_draws: default_truth_draws(),
        }
    }
}

/// What one replicate contributes for one estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Draw {
    theta: f64,
    ci: Option<[f64; 2]>,
    alpha_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub replicates_ok: usize,
    pub failures: usize,
    pub mae_x100: f64,
    pub me_x100: f64,
    /// Share of intervals covering the truth; estimators with intervals only.
    pub coverage: Option<f64>,
    /// Mean across replicates of `sd(alpha_tau)`; weighted estimators only.
    pub alpha_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub arm: String,
    pub conditioning: String,
    pub scenario: u8,
    pub n: usize,
    pub truth: f64,
    pub truth_mc_se: f64,
    pub replicates: usize,
    pub estimators: Vec<EstimatorSummary>,
    /// Distinct error messages seen in this cell.
    #[serde(default)]
    pub errors: Vec<String>,
}

impl CellReport {
    pub fn estimator(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub name: String,
    pub seed: u64,
    pub replicates: usize,
    pub cells: Vec<CellReport>,
}

impl ReplicationReport {
    pub fn cell(&self, arm: &str, conditioning: &str, scenario: u8, n: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.arm == arm && c.conditioning == conditioning && c.scenario == scenario && c.n == n)
    }
}

type CellDraws = std::result::Result<Vec<(EstimatorKind, Draw)>, String>;

/// One replicate of an arm at one sample size: draws for every
/// `(conditioning, scenario)` pair. Nuisances are fitted once per
/// conditioning set and shared by the scenarios.
fn run_replicate(
    arm: &ArmSpec,
    policy: &PolicySpec,
    conditionings: &[ConditioningSpec],
    scenarios: &[Scenario],
    n: usize,
    seed: u64,
) -> Vec<Vec<CellDraws>> {
    let model = arm.dgp.model();
    let tau = model.tau();
    let frame = match simulate(model.as_ref(), n, derive_seed(seed, &[0])) {
        Ok(f) => f,
        Err(e) => return vec![vec![Err(e.to_string()); scenarios.len()]; conditionings.len()],
    };
    conditionings
        .iter()
        .enumerate()
        .map(|(c, cond)| {
            let base = arm.task.task(policy.clone(), cond.clone(), derive_seed(seed, &[1, c as u64]));
            let prepared = base.validate(&frame).and_then(|_| {
                let plan = fold_plan(&frame, &base)?;
                let needs_weights = base.estimators.iter().any(|e| *e != EstimatorKind::Sub);
                let nu = if needs_weights { Some(fit_nuisances(&frame, &base, &plan)?) } else { None };
                Ok((plan, nu))
            });
            let (plan, nu) = match prepared {
                Ok(p) => p,
                Err(e) => return vec![Err(e.to_string()); scenarios.len()],
            };
            scenarios
                .iter()
                .map(|&sc| {
                    let mut task = base.clone();
                    task.degrade = sc.degrade(tau);
                    let nu_sc = nu.clone().map(|mut v| {
                        v.weights.override_with_ones(&task.degrade.alpha_ones);
                        v
                    });
                    let alpha_sd = nu_sc.as_ref().map(|v| v.weights.summaries[tau - 1].sd);
                    estimate_with(&frame, &task, &plan, nu_sc.as_ref())
                        .map(|results| results.iter().map(|r| (r.estimator, draw_of(r, alpha_sd))).collect())
                        .map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect()
}

fn draw_of(r: &EstimateResult, alpha_sd: Option<f64>) -> Draw {
    let weighted = r.estimator != EstimatorKind::Sub;
    Draw { theta: r.theta_hat, ci: r.ci, alpha_sd: if weighted { alpha_sd } else { None } }
}

fn summarize(kind: EstimatorKind, draws: &[Draw], failures: usize, truth: f64) -> EstimatorSummary {
    let k = draws.len() as f64;
    let mean = |f: &dyn Fn(&Draw) -> f64| if draws.is_empty() { f64::NAN } else { draws.iter().map(f).sum::<f64>() / k };
    let with_ci: Vec<[f64; 2]> = draws.iter().filter_map(|d| d.ci).collect();
    let sds: Vec<f64> = draws.iter().filter_map(|d| d.alpha_sd).collect();
    EstimatorSummary {
        estimator: kind,
        replicates_ok: draws.len(),
        failures,
        mae_x100: 100.0 * mean(&|d| (d.theta - truth).abs()),
        me_x100: 100.0 * mean(&|d| d.theta - truth),
        coverage: (!with_ci.is_empty())
            .then(|| with_ci.iter().filter(|ci| ci[0] <= truth && truth <= ci[1]).count() as f64 / with_ci.len() as f64),
        alpha_sd: (!sds.is_empty()).then(|| sds.iter().sum::<f64>() / sds.len() as f64),
    }
}

/// Truth per conditioning set of an arm, from the config or the oracle.
pub fn arm_truths(arm: &ArmSpec, draws: usize, seed: u64) -> Result<Vec<Truth>> {
    let tau = arm.dgp.tau();
    let policy = arm.policy.resolve(tau)?;
    if arm.conditionings.iter().all(|c| c.truth.is_some()) {
        return Ok(arm.conditionings.iter().map(|c| c.truth.unwrap()).collect());
    }
    let specs = arm.conditionings.iter().map(|c| c.resolve(tau)).collect::<Result<Vec<_>>>()?;
    let computed = compute_true_gatt_many(arm.dgp.model().as_ref(), &policy, &specs, draws, seed)?;
    Ok(arm.conditionings.iter().zip(computed).map(|(c, t)| c.truth.unwrap_or(t)).collect())
}

/// Runs every cell of the study. Replicate `r` of arm `a` at sample size
/// index `k` is seeded from `(seed, a, k, r)`, so the report does not depend
/// on the thread count.
pub fn run_replications(study: &StudyConfig) -> Result<ReplicationReport> {
    study.validate()?;
    let mut cells = Vec::new();
    for (a, arm) in study.arms.iter().enumerate() {
        let tau = arm.dgp.tau();
        let policy = arm.policy.resolve(tau)?;
        let conditionings = arm.conditionings.iter().map(|c| c.resolve(tau)).collect::<Result<Vec<_>>>()?;
        let truths = arm_truths(arm, study.truth_draws, derive_seed(study.seed, &[a as u64, u64::MAX]))?;
        for (k, &n) in study.sample_sizes.iter().enumerate() {
            log::info!("arm '{}': n = {n}, {} replicates", arm.label, study.replicates);
            let reps: Vec<Vec<Vec<CellDraws>>> = (0..study.replicates)
                .into_par_iter()
                .map(|r| {
                    let seed = derive_seed(study.seed, &[a as u64, k as u64, r as u64]);
                    run_replicate(arm, &policy, &conditionings, &study.scenarios, n, seed)
                })
                .collect();
            for (c, cond) in arm.conditionings.iter().enumerate() {
                for (s, &sc) in study.scenarios.iter().enumerate() {
                    cells.push(aggregate(arm, cond, sc, n, &truths[c], &reps, c, s, study.replicates));
                }
            }
        }
    }
    Ok(ReplicationReport { name: study.name.clone(), seed: study.seed, replicates: study.replicates, cells })
}

#[allow(clippy::too_many_arguments)]
fn aggregate(
    arm: &ArmSpec,
    cond: &ConditioningArm,
    scenario: Scenario,
    n: usize,
    truth: &Truth,
    reps: &[Vec<Vec<CellDraws>>],
    c: usize,
    s: usize,
    replicates: usize,
) -> CellReport {
    let mut errors: Vec<String> = Vec::new();
    let mut per: BTreeMap<EstimatorKind, Vec<Draw>> = arm.task.estimators.iter().map(|&e| (e, Vec::new())).collect();
    let mut failed = 0usize;
    for rep in reps {
        match &rep[c][s] {
            Ok(draws) => {
                for (kind, d) in draws {
                    per.entry(*kind).or_default().push(*d);
                }
            }
            Err(msg) => {
                failed += 1;
                if !errors.contains(msg) {
                    errors.push(msg.clone());
                }
            }
        }
    }
    let estimators = per.iter().map(|(&kind, draws)| summarize(kind, draws, failed, truth.theta_true)).collect();
    CellReport {
        arm: arm.label.clone(),
        conditioning: cond.label.clone(),
        scenario: scenario.id(),
        n,
        truth: truth.theta_true,
        truth_mc_se: truth.mc_se,
        replicates,
        estimators,
        errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_json_shape() {
        let s: StudyConfig = serde_json::from_str(
            r#"{"arms":[{"label":"x","dgp":{"kind":"sim1"},
                 "policy":{"type":"threshold_shift","delta":-1,"comparator":"ge","threshold":1},
                 "conditionings":[{"label":"{1}","sets":{"4":{"type":"value_set","values":[1]}}}]}],
               "sample_sizes":[500],"replicates":2}"#,
        )
        .unwrap();
        s.validate().unwrap();
        let spec = s.arms[0].conditionings[0].resolve(4).unwrap();
        assert!(spec.is_trivial_from(5) && !spec.set(4).is_all() && spec.set(3).is_all());
        assert_eq!(s.arms[0].policy.resolve(4).unwrap().tau(), 4);
    }

    #[test]
    fn summary_metrics() {
        let draws = [
            Draw { theta: 1.1, ci: Some([0.9, 1.3]), alpha_sd: Some(2.0) },
            Draw { theta: 0.8, ci: Some([0.7, 0.95]), alpha_sd: Some(4.0) },
        ];
        let s = summarize(EstimatorKind::Tmle, &draws, 1, 1.0);
        assert!((s.mae_x100 - 15.0).abs() < 1e-9);
        assert!((s.me_x100 + 5.0).abs() < 1e-9);
        assert_eq!(s.coverage, Some(0.5));
        assert_eq!(s.alpha_sd, Some(3.0));
        assert_eq!(s.failures, 1);
    }

    #[test]
    fn tiny_study_is_deterministic() {
        let mut study = StudyConfig::sim1(&[1.0], vec![Scenario::AllConsistent, Scenario::AllDegraded], vec![300], 2, 9);
        study.truth_draws = 100_000;
        let a = run_replications(&study).unwrap();
        let b = run_replications(&study).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 2);
        assert!(a.cells.iter().all(|c| c.estimators.iter().all(|e| e.replicates_ok + e.failures == 2)));
    }
}
