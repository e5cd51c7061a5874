//! Acceptance suite. Each test writes one `[acceptance]` verdict line to
//! stderr, past the test harness capture. `GATT_ACCEPTANCE_REPLICATES` lowers the
//! replicate count of the two simulation studies for quick local runs.

mod common;

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use gatt::estimators::{estimate, estimate_with_regressor, fold_plan};
use gatt::learners::{fit, Fitted, Head, LearnerSpec, Mlp};
use gatt::riesz::{fit_riesz_sequence, g_sequence_from_values, RieszCandidate, RieszMode};
use gatt::simlab::{
    compute_true_gatt, run_replications, simulate, AttToy, ExactLaw, PathState, Scenario, Sim1, Sim2, StudyConfig,
};
use gatt::{ConditioningSpec, EstimatorKind, OutcomeFamily, PolicyRule, PolicySpec, TaskSpec, TreatmentSet};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn verdict(id: u8, name: &str, pass: bool, detail: &str) {
    let line = format!("[acceptance] criterion {id} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    // Written to the raw handle so the line survives output capture.
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn replicates() -> usize {
    std::env::var("GATT_ACCEPTANCE_REPLICATES").ok().and_then(|v| v.parse().ok()).unwrap_or(200)
}

#[test]
fn c1_exact_oracle_equivalence() {
    let start = Instant::now();
    let frame = exact_att_frame();
    let (policy, cond) = (att_policy(), att_conditioning());
    let exact = ExactLaw::new(&AttToy, &policy, &cond);
    let truth = exact.structural_truth();
    let fits = exact.nuisances_for(&frame);
    let nuisances = fits.nuisances(&frame, &cond);
    let task = TaskSpec::new(policy.clone(), cond.clone());
    let results = estimate_with_regressor(&frame, &task, Some(&nuisances), &fits.regressor()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let worst = results.iter().map(|r| (r.theta_hat - 0.24).abs()).fold(0.0, f64::max);
    let eps = results.iter().flat_map(|r| r.diagnostics.epsilon.iter()).fold(0.0f64, |m, e| m.max(e.abs()));
    let detail = format!(
        "truth {truth:.12}, {}, max |theta - 0.24| {worst:.1e}, max |eps| {eps:.1e}, {elapsed:.3}s",
        results.iter().map(|r| format!("{:?} {:.12}", r.estimator, r.theta_hat)).collect::<Vec<_>>().join(", ")
    );
    let pass = results.len() == 3 && (truth - 0.24).abs() < 1e-12 && worst <= 1e-10 && elapsed < 1.0;
    verdict(1, "exact-oracle equivalence", pass, &detail);
}

#[test]
fn c2_score_equation() {
    let mut runs: Vec<(String, f64)> = Vec::new();
    let mut record = |label: &str, frame: &gatt::LongitudinalFrame, task: &TaskSpec| {
        for r in estimate(frame, task).unwrap() {
            if r.estimator == EstimatorKind::Tmle {
                runs.push((label.to_owned(), r.diagnostics.mean_eif.unwrap()));
            }
        }
    };

    let att = simulate(&AttToy, 4000, 1).unwrap();
    record("att toy", &att, &TaskSpec { seed: 2, ..TaskSpec::new(att_policy(), att_conditioning()) });

    let sim1 = simulate(&Sim1, 1000, 3).unwrap();
    let sim1_policy = PolicySpec::uniform(
        PolicyRule::ThresholdShift { delta: -1.0, comparator: gatt::policy::Comparator::Ge, threshold: 1.0 },
        4,
    );
    let sim1_cond = ConditioningSpec::at(4, [(4, TreatmentSet::value(1.0))]);
    record("sim1 B4={1}", &sim1, &TaskSpec { seed: 4, ..TaskSpec::new(sim1_policy, sim1_cond) });

    let sim2 = simulate(&Sim2 { tau: 4, sigma: 1.0 }, 1000, 5).unwrap();
    for mode in [RieszMode::LossMinimization, RieszMode::PluginDiscrete] {
        let task = TaskSpec {
            riesz_mode: mode,
            seed: 6,
            ..TaskSpec::new(PolicySpec::uniform(PolicyRule::Constant { value: 1.0 }, 4), ConditioningSpec::trivial(4))
        };
        record(&format!("sim2 tau=4 {mode:?}"), &sim2, &task);
    }

    let chain_frame = simulate(&chain(), 600, 7).unwrap();
    let mut task = TaskSpec::new(
        PolicySpec::uniform(PolicyRule::Constant { value: 1.0 }, 2),
        ConditioningSpec::new(vec![TreatmentSet::All, TreatmentSet::value(1.0)]),
    );
    task.learners.alpha = RieszCandidate::Mlp {
        params: gatt::learners::MlpParams { hidden_units: 8, epochs: 40, learning_rate: 1e-2, ..Default::default() },
    };
    task.seed = 8;
    record("binary chain, mlp weights", &chain_frame, &task);

    let worst = runs.iter().map(|(_, m)| m.abs()).fold(0.0, f64::max);
    let detail = runs.iter().map(|(l, m)| format!("{l}: {m:.1e}")).collect::<Vec<_>>().join("; ");
    verdict(2, "score equation", worst <= 1e-6, &format!("max |mean EIF| {worst:.1e}; {detail}"));
}

#[test]
fn c3_riesz_identity() {
    let frame = simulate(&Sim2 { tau: 4, sigma: 1.0 }, 10_000, 9).unwrap();
    let start = Instant::now();
    let cond = ConditioningSpec::trivial(4);
    let task = TaskSpec::new(PolicySpec::identity(4), cond.clone());
    let plan = fold_plan(&frame, &task).unwrap();
    let g = g_sequence_from_values(&frame, &cond, vec![vec![1.0; frame.n()]; 4], 1.0);
    let candidate = RieszCandidate::Linear { interaction_order: 1 };
    let fit = fit_riesz_sequence(&frame, &task.policy, &g, &candidate, &plan, None, 1).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let worst = fit.observed.iter().flatten().map(|a| (a - 1.0).abs()).fold(0.0, f64::max);
    let detail = format!("n = 10000, tau = 4, max |alpha - 1| {worst:.1e}, {elapsed:.3}s");
    verdict(3, "riesz identity", worst <= 1e-6 && elapsed < 1.0, &detail);
}

/// `Psi_1(f) = E[f(d(A_1), L_1) | A_1 in B_1, A_2 in B_2]` summed over the
/// binary chain's paths directly from its coefficients.
fn psi_1_by_paths(f: &dyn Fn(&PathState) -> f64, b2: f64) -> f64 {
    let c = chain();
    let (mut num, mut den) = (0.0, 0.0);
    for l1 in [0.0, 1.0] {
        let pl1 = if l1 == 1.0 { c.l1_p } else { 1.0 - c.l1_p };
        for a1 in [0.0, 1.0] {
            let q = expit(c.a0 + c.a_l * l1);
            let pa1 = if a1 == 1.0 { q } else { 1.0 - q };
            for l2 in [0.0, 1.0] {
                let q = expit(c.l0 + c.l_prev * l1 + c.l_a * a1);
                let pl2 = if l2 == 1.0 { q } else { 1.0 - q };
                let q = expit(c.a0 + c.a_prev * a1 + c.a_l * l2);
                let pa2 = if b2 == 1.0 { q } else { 1.0 - q };
                let p = pl1 * pa1 * pl2 * pa2;
                num += p * f(&PathState { l: vec![vec![l1]], a: vec![1.0] });
                den += p;
            }
        }
    }
    num / den
}

#[test]
fn c4_representer_property() {
    let law = chain();
    let policy = PolicySpec::uniform(PolicyRule::Constant { value: 1.0 }, 2);
    let cond = ConditioningSpec::new(vec![TreatmentSet::All, TreatmentSet::value(1.0)]);
    let exact = ExactLaw::new(&law, &policy, &cond);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut worst_oracle) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let table: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = |s: &PathState| {
            let idx: usize = s
                .l
                .iter()
                .zip(&s.a)
                .enumerate()
                .map(|(k, (l, &a))| (l[0] as usize) << (2 * k) | (a as usize) << (2 * k + 1))
                .sum();
            table[idx]
        };
        for t in 1..=2 {
            let lhs = exact.expectation(t, &|s| exact.alpha(t, s) * m(s));
            worst = worst.max((lhs - exact.psi(t, &m)).abs());
        }
        worst_oracle = worst_oracle.max((exact.psi(1, &m) - psi_1_by_paths(&m, 1.0)).abs());
    }
    let detail = format!("20 test functions, t = 1, 2: max |E[alpha m] - Psi(m)| {worst:.1e}; Psi_1 vs path sum {worst_oracle:.1e}");
    verdict(4, "representer property", worst <= 1e-10 && worst_oracle <= 1e-12, &detail);
}

#[test]
fn c5_simulation_study_1() {
    let mut study: StudyConfig = gatt::config::read_json(&repo_path("configs/sim1_table1.json")).unwrap();
    study.arms[0].conditionings.retain(|c| c.label == "{1}");
    assert!(study.arms[0].conditionings[0].truth.is_some(), "frozen truth missing");
    study.scenarios = vec![Scenario::AllConsistent, Scenario::EarlyOutcome, Scenario::AllDegraded];
    study.replicates = replicates();
    let start = Instant::now();
    let report = run_replications(&study).unwrap();
    print!("{}", gatt::simlab::report::format_table(&report));
    let cell = |scenario: u8, n: usize| report.cell("sim1", "{1}", scenario, n).unwrap();
    let tmle = |scenario: u8, n: usize| cell(scenario, n).estimator(EstimatorKind::Tmle).unwrap().clone();
    let ipw = |scenario: u8, n: usize| cell(scenario, n).estimator(EstimatorKind::Ipw).unwrap().clone();

    let s1 = tmle(1, 5000);
    let cov1 = s1.coverage.unwrap();
    let ok1 = (0.90..=0.99).contains(&cov1) && s1.me_x100.abs() <= 1.0;
    let ipw_me: Vec<f64> = study.sample_sizes.iter().map(|&n| ipw(2, n).me_x100).collect();
    let s2 = tmle(2, 5000);
    let ok2 = ipw_me.iter().all(|m| m.abs() >= 10.0) && s2.mae_x100 <= 3.0;
    let cov4: Vec<f64> = study.sample_sizes.iter().map(|&n| tmle(4, n).coverage.unwrap()).collect();
    let ok4 = *cov4.last().unwrap() <= 0.05;
    let failures: usize = report.cells.iter().flat_map(|c| &c.estimators).map(|e| e.failures).sum();

    let detail = format!(
        "R = {}; S1 N=5000 TMLE coverage {:.3}, ME x100 {:.2}; S2 IPW ME x100 {:?}, TMLE MAE x100 {:.2} at N=5000; \
         S4 coverage {:?}; failed fits {failures}; {:.0}s",
        study.replicates,
        cov1,
        s1.me_x100,
        ipw_me.iter().map(|m| (m * 100.0).round() / 100.0).collect::<Vec<_>>(),
        s2.mae_x100,
        cov4,
        start.elapsed().as_secs_f64()
    );
    verdict(5, "simulation study 1 bands", ok1 && ok2 && ok4, &detail);
}

#[test]
fn c6_simulation_study_2() {
    let study = StudyConfig::sim2(&[14], vec![1000], replicates(), 20240602);
    let start = Instant::now();
    let report = run_replications(&study).unwrap();
    print!("{}", gatt::simlab::report::format_table(&report));
    let get = |arm: &str| report.cell(arm, "trivial", 1, 1000).unwrap().estimator(EstimatorKind::Tmle).unwrap().clone();
    let (loss, plugin) = (get("loss tau=14"), get("plugin tau=14"));
    let (cl, cp) = (loss.coverage.unwrap(), plugin.coverage.unwrap());
    let ratio = plugin.alpha_sd.unwrap() / loss.alpha_sd.unwrap();
    let pass = cl >= 0.88 && cp <= 0.75 && ratio >= 3.0 && loss.mae_x100 <= 12.0 && plugin.mae_x100 >= 25.0;
    let detail = format!(
        "R = {}; coverage loss {cl:.3} vs plug-in {cp:.3}; sd(alpha_tau) ratio {ratio:.2}; MAE x100 {:.2} vs {:.2}; {:.0}s",
        study.replicates,
        loss.mae_x100,
        plugin.mae_x100,
        start.elapsed().as_secs_f64()
    );
    verdict(6, "simulation study 2", pass, &detail);
}

#[test]
fn c7_analytic_truth() {
    let mut parts = Vec::new();
    let mut pass = true;
    for tau in [2, 6, 14] {
        let policy = PolicySpec::uniform(PolicyRule::Constant { value: 1.0 }, tau);
        let truth =
            compute_true_gatt(&Sim2 { tau, sigma: 1.0 }, &policy, &ConditioningSpec::trivial(tau), 1_000_000, 77).unwrap();
        let analytic = 1.0 + 0.5 * 0.25f64.powi(tau as i32 - 1);
        let z = (truth.theta_true - analytic) / truth.mc_se;
        pass &= z.abs() <= 4.0;
        parts.push(format!("tau {tau}: {:.5} vs {analytic:.5} (z {z:.2})", truth.theta_true));
    }
    verdict(7, "analytic truth check", pass, &parts.join("; "));
}

#[test]
fn c8_learner_numerics() {
    let x = DMatrix::from_row_slice(5, 3, &[
        0.3, -1.2, 1.0, 1.7, 0.4, 0.0, -0.8, 2.1, 1.0, 0.05, -0.6, 0.0, 1.1, 0.9, 1.0,
    ]);
    let y = [0.2, 1.0, 0.7, -0.4, 1.3];
    let yb = [0.0, 1.0, 1.0, 0.0, 1.0];
    let w = [1.0, 0.5, 2.0, 1.0, 0.25];
    let mut worst: f64 = 0.0;
    for (head, target) in [(Head::Identity, &y), (Head::Logistic, &yb)] {
        let net = Mlp::initialize(&x, 6, head, 0.1, 5);
        let (_, grad) = net.regression_loss_grad(&x, target, &w, 1e-2);
        let theta = net.parameters().to_vec();
        for k in 0..theta.len() {
            let h = 1e-5;
            let mut plus = theta.clone();
            plus[k] += h;
            let mut minus = theta.clone();
            minus[k] -= h;
            let lp = net.with_parameters(plus).regression_loss_grad(&x, target, &w, 1e-2).0;
            let lm = net.with_parameters(minus).regression_loss_grad(&x, target, &w, 1e-2).0;
            let fd = (lp - lm) / (2.0 * h);
            worst = worst.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 50;
    let xs: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
    let xg = DMatrix::from_row_slice(n, 3, &xs);
    let beta = [0.7, -1.5, 2.25, 0.125];
    let yg: Vec<f64> = (0..n).map(|i| beta[0] + (0..3).map(|j| beta[j + 1] * xg[(i, j)]).sum::<f64>()).collect();
    let model = fit(&LearnerSpec::glm(0), &xg, &yg, &vec![1.0; n], OutcomeFamily::Gaussian, 0).unwrap();
    let Fitted::Glm(g) = &model.fitted else { panic!("expected a glm fit") };
    let coef_err = g.beta.iter().zip(beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let detail = format!("mlp max relative gradient error {worst:.1e}; glm max coefficient error {coef_err:.1e}");
    verdict(8, "learner numerics", worst <= 1e-4 && coef_err <= 1e-10, &detail);
}

fn gatt(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_gatt")).args(args).status().unwrap();
    assert!(status.success(), "gatt {args:?} failed");
}

#[test]
fn c9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let smoke = repo_path("configs/sim1_smoke.json");
    let att = repo_path("configs/att_toy_estimate.json");
    let truth = repo_path("configs/sim1_truth.json");
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("simulate", vec!["--seed".into(), "5".into(), "simulate".into(), "--dgp".into(), "sim1".into(), "--n".into(), "300".into()]),
        ("estimate", vec!["estimate".into(), "--config".into(), att.to_str().unwrap().into()]),
        ("truth", vec!["truth".into(), "--config".into(), truth.to_str().unwrap().into(), "--draws".into(), "200000".into()]),
        ("replicate", vec!["replicate".into(), "--config".into(), smoke.to_str().unwrap().into(), "--replicates".into(), "4".into()]),
    ];
    let mut identical = Vec::new();
    for (name, args) in &runs {
        let mut outputs = Vec::new();
        for (k, threads) in ["2", "2", "1"].iter().enumerate() {
            let out = p(&format!("{name}{k}"));
            let mut full: Vec<&str> = vec!["--threads", threads];
            full.extend(args.iter().map(String::as_str));
            if *name == "replicate" {
                full.extend(["--json", &out, "--table", "/dev/null"]);
            } else {
                full.extend(["--out", &out]);
            }
            gatt(&full);
            outputs.push(std::fs::read(&out).unwrap());
        }
        identical.push((name, outputs[0] == outputs[1], outputs[0] == outputs[2]));
    }
    let pass = identical.iter().all(|(_, same, single)| *same && *single);
    let detail = identical
        .iter()
        .map(|(n, same, single)| format!("{n}: repeat {same}, single-thread {single}"))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(9, "determinism", pass, &detail);
}
