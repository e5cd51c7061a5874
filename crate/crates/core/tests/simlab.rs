mod common;

use gatt::simlab::oracle::draw_intervened;
use gatt::simlab::{compute_true_gatt, simulate, ExactLaw, PathState, Sim1, Sim2, StructuralModel, StudyConfig};
use gatt::{ConditioningSpec, PolicyRule, PolicySpec, TreatmentSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn sim1_policy() -> PolicySpec {
    PolicySpec::uniform(
        PolicyRule::ThresholdShift { delta: -1.0, comparator: gatt::policy::Comparator::Ge, threshold: 1.0 },
        4,
    )
}

#[test]
fn oracle_agrees_with_enumeration_across_seeds() {
    let law = chain();
    let policy = PolicySpec::uniform(PolicyRule::Constant { value: 1.0 }, 2);
    let cond = ConditioningSpec::new(vec![TreatmentSet::All, TreatmentSet::value(0.0)]);
    let exact = ExactLaw::new(&law, &policy, &cond).structural_truth();
    for seed in 0..20 {
        let t = compute_true_gatt(&law, &policy, &cond, 100_000, seed).unwrap();
        assert!((t.theta_true - exact).abs() <= 4.0 * t.mc_se, "seed {seed}: {} vs {exact}", t.theta_true);
    }
}

#[test]
fn frozen_sim1_truths_match_enumeration() {
    let study: StudyConfig = gatt::config::read_json(&repo_path("configs/sim1_table1.json")).unwrap();
    let policy = sim1_policy();
    for arm in &study.arms[0].conditionings {
        let truth = arm.truth.expect("frozen truth");
        let cond = arm.resolve(4).unwrap();
        let exact = ExactLaw::new(&Sim1, &policy, &cond).structural_truth();
        let z = (truth.theta_true - exact) / truth.mc_se;
        assert!(z.abs() <= 4.0, "{}: frozen {} vs exact {exact} (z = {z:.2})", arm.label, truth.theta_true);
    }
}

#[test]
fn natural_values_follow_the_observed_law_under_identity() {
    let model = Sim1;
    let policy = PolicySpec::identity(4);
    let names: Vec<Vec<String>> = (1..=4).map(|t| model.covariate_names(t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut state, mut natural) = (PathState::default(), Vec::new());
    let m = 100_000;
    let mut counts = [0usize; 6];
    for _ in 0..m {
        draw_intervened(&model, &policy, &names, &mut rng, &mut state, &mut natural);
        counts[natural[3] as usize] += 1;
    }
    let cond = ConditioningSpec::trivial(4);
    let exact = ExactLaw::new(&model, &policy, &cond);
    let mut chi2 = 0.0;
    for (a, &c) in counts.iter().enumerate() {
        let p = exact.expectation(4, &|s| if s.a[3] == a as f64 { 1.0 } else { 0.0 });
        let e = p * m as f64;
        chi2 += (c as f64 - e).powi(2) / e;
    }
    // 0.999 quantile of chi-square with 5 degrees of freedom.
    assert!(chi2 < 20.52, "chi-square {chi2}");
}

#[test]
fn sim2_covariates_ignore_the_intervention() {
    let model = Sim2 { tau: 5, sigma: 1.0 };
    let names: Vec<Vec<String>> = (1..=5).map(|t| model.covariate_names(t)).collect();
    let paths = |policy: &PolicySpec| {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut state, mut natural) = (PathState::default(), Vec::new());
        (0..2000)
            .map(|_| {
                draw_intervened(&model, policy, &names, &mut rng, &mut state, &mut natural);
                state.l.clone()
            })
            .collect::<Vec<_>>()
    };
    let base = paths(&PolicySpec::identity(5));
    assert_eq!(base, paths(&PolicySpec::uniform(PolicyRule::Constant { value: 1.0 }, 5)));
    assert_eq!(base, paths(&PolicySpec::uniform(PolicyRule::Constant { value: 0.0 }, 5)));
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

#[test]
fn simulated_moments() {
    let n = 200_000;
    let sim1 = simulate(&Sim1, n, 1).unwrap();
    let a1 = mean(sim1.treatment(1).iter().zip(&sim1.covariates(1).columns[0]).filter(|(_, &l)| l == 1.0).map(|(a, _)| *a));
    let target = 5.0 * expit(-0.3);
    // sd of Binomial(5, p) is at most 1.12; about n / 2 units have L_1 = 1.
    assert!((a1 - target).abs() < 4.0 * 1.12 / ((n / 2) as f64).sqrt(), "{a1} vs {target}");

    let sim2 = simulate(&Sim2 { tau: 2, sigma: 1.0 }, n, 2).unwrap();
    let l2 = mean(sim2.covariates(2).columns[0].iter().copied());
    // Var(L_2) = 0.0625 / 12 + 0.25.
    assert!((l2 - 0.125).abs() < 4.0 * (0.255f64 / n as f64).sqrt(), "{l2}");
    let y = mean(sim2.outcome().iter().copied());
    let ey = mean(sim2.treatment(2).iter().copied()) + 0.125;
    assert!((y - ey).abs() < 0.02, "{y} vs {ey}");
}
