mod common;

use gatt::estimators::{estimate, estimate_with_regressor, ratio_estimate, RatioMethod};
use gatt::learners::LearnerSpec;
use gatt::riesz::RieszMode;
use gatt::simlab::{simulate, ExactLaw, Sim2};
use gatt::{ConditioningSpec, EstimatorKind, PolicyRule, PolicySpec, TaskSpec, TreatmentSet};

use common::*;

#[test]
fn exact_nuisances_leave_nothing_to_target() {
    let frame = exact_att_frame();
    let (policy, cond) = (att_policy(), att_conditioning());
    let exact = ExactLaw::new(&gatt::simlab::AttToy, &policy, &cond);
    let fits = exact.nuisances_for(&frame);
    let task = TaskSpec::new(policy.clone(), cond.clone());
    let results = estimate_with_regressor(&frame, &task, Some(&fits.nuisances(&frame, &cond)), &fits.regressor()).unwrap();
    let tmle = results.iter().find(|r| r.estimator == EstimatorKind::Tmle).unwrap();
    assert!(tmle.diagnostics.epsilon[0].abs() < 1e-12);
    assert_eq!(tmle.n_conditioning, 400);
    assert!((tmle.diagnostics.g0_hat - 0.4).abs() < 1e-15);
    let (lo, hi) = (tmle.ci.unwrap()[0], tmle.ci.unwrap()[1]);
    assert!(lo <= tmle.theta_hat && tmle.theta_hat <= hi && tmle.se.unwrap() > 0.0);
}

#[test]
fn identity_policy_with_intercept_only_outcome_models_returns_the_mean() {
    let frame = simulate(&Sim2 { tau: 3, sigma: 1.0 }, 2000, 3).unwrap();
    let mut task = TaskSpec::new(PolicySpec::identity(3), ConditioningSpec::trivial(3));
    task.folds = 1;
    task.learners.m = vec![LearnerSpec::intercept_only()];
    let ybar = frame.outcome().iter().sum::<f64>() / frame.n() as f64;
    for r in estimate(&frame, &task).unwrap() {
        assert!((r.theta_hat - ybar).abs() < 1e-9, "{:?}: {} vs {ybar}", r.estimator, r.theta_hat);
    }
}

#[test]
fn all_estimators_recover_the_sim2_truth() {
    let tau = 3;
    let frame = simulate(&Sim2 { tau, sigma: 1.0 }, 5000, 8).unwrap();
    let truth = Sim2::analytic_truth(tau);
    for mode in [RieszMode::LossMinimization, RieszMode::PluginDiscrete] {
        let task = TaskSpec {
            riesz_mode: mode,
            seed: 1,
            ..TaskSpec::new(PolicySpec::uniform(PolicyRule::Constant { value: 1.0 }, tau), ConditioningSpec::trivial(tau))
        };
        for r in estimate(&frame, &task).unwrap() {
            assert!((r.theta_hat - truth).abs() < 0.1, "{mode:?} {:?}: {}", r.estimator, r.theta_hat);
        }
    }
}

#[test]
fn same_seed_same_estimates() {
    let frame = simulate(&chain(), 800, 5).unwrap();
    let task = TaskSpec {
        seed: 17,
        ..TaskSpec::new(
            PolicySpec::uniform(PolicyRule::Constant { value: 1.0 }, 2),
            ConditioningSpec::new(vec![TreatmentSet::value(1.0), TreatmentSet::All]),
        )
    };
    assert_eq!(estimate(&frame, &task).unwrap(), estimate(&frame, &task).unwrap());
}

#[test]
fn paired_ratio_uses_both_influence_functions() {
    let frame = simulate(&chain(), 3000, 9).unwrap();
    let run = |value: f64| {
        let task = TaskSpec {
            estimators: vec![EstimatorKind::Tmle],
            seed: 2,
            ..TaskSpec::new(PolicySpec::uniform(PolicyRule::Constant { value }, 2), ConditioningSpec::trivial(2))
        };
        estimate(&frame, &task).unwrap().remove(0)
    };
    let (treated, control) = (run(1.0), run(0.0));
    let r = ratio_estimate(&treated, &control).unwrap();
    assert_eq!(r.method, RatioMethod::PairedEif);
    assert!((r.ratio - treated.theta_hat / control.theta_hat).abs() < 1e-12);
    let (num, den) = (treated.eif.as_ref().unwrap(), control.eif.as_ref().unwrap());
    let n = num.len() as f64;
    let d: Vec<f64> = num
        .iter()
        .zip(den)
        .map(|(a, b)| a / control.theta_hat - treated.theta_hat * b / (control.theta_hat * control.theta_hat))
        .collect();
    let m = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((r.se - sd / n.sqrt()).abs() < 1e-12);
}
