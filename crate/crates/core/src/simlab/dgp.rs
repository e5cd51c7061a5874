//! Structural data-generating processes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GattError, Result};
use crate::frame::{CovariateBlock, HistoryLookup, LongitudinalFrame, OutcomeFamily};
use crate::learners::expit;

/// Covariates and treatments generated so far along one path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathState {
    pub l: Vec<Vec<f64>>,
    pub a: Vec<f64>,
}

impl PathState {
    pub fn with_capacity(tau: usize) -> Self {
        Self { l: Vec::with_capacity(tau), a: Vec::with_capacity(tau) }
    }
}

/// History lookup over a path, resolving `L<t>_<name>` and `A<t>` columns.
pub struct StateView<'a> {
    pub state: &'a PathState,
    pub names: &'a [Vec<String>],
}

impl HistoryLookup for StateView<'_> {
    fn lookup(&self, column: &str) -> Option<f64> {
        if let Some(rest) = column.strip_prefix('A') {
            let s: usize = rest.parse().ok()?;
            return self.state.a.get(s.checked_sub(1)?).copied();
        }
        let rest = column.strip_prefix('L')?;
        let (t, name) = rest.split_once('_')?;
        let t: usize = t.parse().ok()?;
        let block = self.state.l.get(t.checked_sub(1)?)?;
        let k = self.names.get(t - 1)?.iter().position(|n| n == name)?;
        block.get(k).copied()
    }
}

/// Sequential structural equations `L_t, A_t, ..., Y`. Times are 1-based;
/// `state` holds everything generated before the quantity being drawn.
pub trait StructuralModel: Send + Sync {
    fn tau(&self) -> usize;
    fn family(&self) -> OutcomeFamily;
    fn covariate_names(&self, t: usize) -> Vec<String>;
    fn draw_covariates(&self, t: usize, state: &PathState, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn draw_treatment(&self, t: usize, state: &PathState, rng: &mut ChaCha8Rng) -> f64;
    fn draw_outcome(&self, state: &PathState, rng: &mut ChaCha8Rng) -> f64;
}

/// A model with finite support that can be enumerated exactly.
pub trait DiscreteLaw: StructuralModel {
    fn covariate_pmf(&self, t: usize, state: &PathState) -> Vec<(Vec<f64>, f64)>;
    fn treatment_pmf(&self, t: usize, state: &PathState) -> Vec<(f64, f64)>;
    fn outcome_mean(&self, state: &PathState) -> f64;
}

fn bernoulli(p: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

fn binomial_pmf(size: u64, p: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(size as usize + 1);
    let mut coef = 1.0;
    for k in 0..=size {
        if k > 0 {
            coef *= (size - k + 1) as f64 / k as f64;
        }
        out.push((k as f64, coef * p.powi(k as i32) * (1.0 - p).powi((size - k) as i32)));
    }
    out
}

fn bernoulli_pmf(p: f64) -> Vec<(f64, f64)> {
    vec![(0.0, 1.0 - p), (1.0, p)]
}

fn single_name() -> Vec<String> {
    vec!["1".to_string()]
}

/// Four-period categorical-treatment process: `L_1` categorical on
/// `{1, 2, 3}`, binary `L_t` afterwards, `A_t ~ Binomial(5, .)`, binary `Y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sim1;

impl Sim1 {
    const L1_PROBS: [f64; 3] = [0.5, 0.25, 0.25];

    fn treatment_p(t: usize, state: &PathState) -> f64 {
        let l = state.l[t - 1][0];
        if t == 1 {
            expit(-0.3 * l)
        } else {
            expit(-2.5 + state.a[t - 2] + 0.5 * l)
        }
    }

    fn covariate_p(t: usize, state: &PathState) -> f64 {
        expit(-0.3 * state.l[t - 2][0] + 0.5 * state.a[t - 2])
    }
}

impl StructuralModel for Sim1 {
    fn tau(&self) -> usize {
        4
    }

    fn family(&self) -> OutcomeFamily {
        OutcomeFamily::Binomial
    }

    fn covariate_names(&self, _t: usize) -> Vec<String> {
        single_name()
    }

    fn draw_covariates(&self, t: usize, state: &PathState, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if t == 1 {
            let u: f64 = rng.random();
            let l = if u < Self::L1_PROBS[0] {
                1.0
            } else if u < Self::L1_PROBS[0] + Self::L1_PROBS[1] {
                2.0
            } else {
                3.0
            };
            vec![l]
        } else {
            vec![bernoulli(Self::covariate_p(t, state), rng)]
        }
    }

    fn draw_treatment(&self, t: usize, state: &PathState, rng: &mut ChaCha8Rng) -> f64 {
        let p = Self::treatment_p(t, state);
        Binomial::new(5, p).expect("valid binomial").sample(rng) as f64
    }

    fn draw_outcome(&self, state: &PathState, rng: &mut ChaCha8Rng) -> f64 {
        bernoulli(self.outcome_mean(state), rng)
    }
}

impl DiscreteLaw for Sim1 {
    fn covariate_pmf(&self, t: usize, state: &PathState) -> Vec<(Vec<f64>, f64)> {
        if t == 1 {
            (0..3).map(|k| (vec![k as f64 + 1.0], Self::L1_PROBS[k])).collect()
        } else {
            bernoulli_pmf(Self::covariate_p(t, state)).into_iter().map(|(v, p)| (vec![v], p)).collect()
        }
    }

    fn treatment_pmf(&self, t: usize, state: &PathState) -> Vec<(f64, f64)> {
        binomial_pmf(5, Self::treatment_p(t, state))
    }

    fn outcome_mean(&self, state: &PathState) -> f64 {
        expit(-1.0 + 0.5 * state.a[3] - state.l[3][0])
    }
}

/// Binary-treatment process with Gaussian covariates whose `L`-equations do
/// not read past treatments.
#[derive(Debug, Clone, Copy)]
pub struct Sim2 {
    pub tau: usize,
    pub sigma: f64,
}

impl Sim2 {
    /// `E[Y]` under `d = 1` with trivial conditioning.
    pub fn analytic_truth(tau: usize) -> f64 {
        1.0 + 0.5 * 0.25f64.powi(tau as i32 - 1)
    }
}

impl StructuralModel for Sim2 {
    fn tau(&self) -> usize {
        self.tau
    }

    fn family(&self) -> OutcomeFamily {
        OutcomeFamily::Gaussian
    }

    fn covariate_names(&self, _t: usize) -> Vec<String> {
        single_name()
    }

    fn draw_covariates(&self, t: usize, state: &PathState, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if t == 1 {
            vec![rng.random::<f64>()]
        } else {
            let mean = 0.25 * state.l[t - 2][0];
            vec![Normal::new(mean, 0.5).expect("finite sd").sample(rng)]
        }
    }

    fn draw_treatment(&self, t: usize, state: &PathState, rng: &mut ChaCha8Rng) -> f64 {
        let p = if t == 1 { 0.5 } else { expit(0.5 + 0.1 * state.l[t - 1][0]) };
        bernoulli(p, rng)
    }

    fn draw_outcome(&self, state: &PathState, rng: &mut ChaCha8Rng) -> f64 {
        let mean = state.a[self.tau - 1] + state.l[self.tau - 1][0];
        Normal::new(mean, self.sigma).expect("finite sd").sample(rng)
    }
}

/// Single-period binary law: `L ~ Bern(0.4)`, `A | L ~ Bern(0.2 + 0.5 L)`,
/// `Y | A, L ~ Bern(0.1 + 0.3 A + 0.2 L)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AttToy;

impl AttToy {
    pub const TRUTH: f64 = 0.24;
}

impl StructuralModel for AttToy {
    fn tau(&self) -> usize {
        1
    }

    fn family(&self) -> OutcomeFamily {
        OutcomeFamily::Binomial
    }

    fn covariate_names(&self, _t: usize) -> Vec<String> {
        single_name()
    }

    fn draw_covariates(&self, _t: usize, _state: &PathState, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![bernoulli(0.4, rng)]
    }

    fn draw_treatment(&self, _t: usize, state: &PathState, rng: &mut ChaCha8Rng) -> f64 {
        bernoulli(0.2 + 0.5 * state.l[0][0], rng)
    }

    fn draw_outcome(&self, state: &PathState, rng: &mut ChaCha8Rng) -> f64 {
        bernoulli(self.outcome_mean(state), rng)
    }
}

impl DiscreteLaw for AttToy {
    fn covariate_pmf(&self, _t: usize, _state: &PathState) -> Vec<(Vec<f64>, f64)> {
        vec![(vec![0.0], 0.6), (vec![1.0], 0.4)]
    }

    fn treatment_pmf(&self, _t: usize, state: &PathState) -> Vec<(f64, f64)> {
        bernoulli_pmf(0.2 + 0.5 * state.l[0][0])
    }

    fn outcome_mean(&self, state: &PathState) -> f64 {
        0.1 + 0.3 * state.a[0] + 0.2 * state.l[0][0]
    }
}

/// Binary logistic chain with user coefficients:
/// `L_1 ~ Bern(l1_p)`, `L_t ~ Bern(expit(l0 + l_prev L_{t-1} + l_a A_{t-1}))`,
/// `A_t ~ Bern(expit(a0 + a_prev A_{t-1} + a_l L_t))`,
/// `Y ~ Bern(expit(y0 + y_a A_tau + y_l L_tau))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryChain {
    pub tau: usize,
    pub l1_p: f64,
    pub l0: f64,
    pub l_prev: f64,
    pub l_a: f64,
    pub a0: f64,
    pub a_prev: f64,
    pub a_l: f64,
    pub y0: f64,
    pub y_a: f64,
    pub y_l: f64,
}

impl BinaryChain {
    fn covariate_p(&self, t: usize, state: &PathState) -> f64 {
        if t == 1 {
            self.l1_p
        } else {
            expit(self.l0 + self.l_prev * state.l[t - 2][0] + self.l_a * state.a[t - 2])
        }
    }

    fn treatment_p(&self, t: usize, state: &PathState) -> f64 {
        let prev = if t == 1 { 0.0 } else { state.a[t - 2] };
        expit(self.a0 + self.a_prev * prev + self.a_l * state.l[t - 1][0])
    }
}

impl StructuralModel for BinaryChain {
    fn tau(&self) -> usize {
        self.tau
    }

    fn family(&self) -> OutcomeFamily {
        OutcomeFamily::Binomial
    }

    fn covariate_names(&self, _t: usize) -> Vec<String> {
        single_name()
    }

    fn draw_covariates(&self, t: usize, state: &PathState, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![bernoulli(self.covariate_p(t, state), rng)]
    }

    fn draw_treatment(&self, t: usize, state: &PathState, rng: &mut ChaCha8Rng) -> f64 {
        bernoulli(self.treatment_p(t, state), rng)
    }

    fn draw_outcome(&self, state: &PathState, rng: &mut ChaCha8Rng) -> f64 {
        bernoulli(self.outcome_mean(state), rng)
    }
}

impl DiscreteLaw for BinaryChain {
    fn covariate_pmf(&self, t: usize, state: &PathState) -> Vec<(Vec<f64>, f64)> {
        bernoulli_pmf(self.covariate_p(t, state)).into_iter().map(|(v, p)| (vec![v], p)).collect()
    }

    fn treatment_pmf(&self, t: usize, state: &PathState) -> Vec<(f64, f64)> {
        bernoulli_pmf(self.treatment_p(t, state))
    }

    fn outcome_mean(&self, state: &PathState) -> f64 {
        expit(self.y0 + self.y_a * state.a[self.tau - 1] + self.y_l * state.l[self.tau - 1][0])
    }
}

fn default_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DgpSpec {
    Sim1,
    Sim2 {
        tau: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    AttToy,
    Custom {
        #[serde(flatten)]
        chain: BinaryChain,
    },
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DgpSpec::Sim2 { tau, sigma } => {
                if *tau < 2 {
                    return Err(GattError::Config("sim2 needs tau >= 2".into()));
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(GattError::Config("sim2 sigma must be positive".into()));
                }
            }
            DgpSpec::Custom { chain } => {
                if chain.tau == 0 || !(0.0..=1.0).contains(&chain.l1_p) {
                    return Err(GattError::Config("custom chain needs tau >= 1 and l1_p in [0, 1]".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn tau(&self) -> usize {
        self.model().tau()
    }

    pub fn model(&self) -> Box<dyn StructuralModel> {
        match self {
            DgpSpec::Sim1 => Box::new(Sim1),
            DgpSpec::Sim2 { tau, sigma } => Box::new(Sim2 { tau: *tau, sigma: *sigma }),
            DgpSpec::AttToy => Box::new(AttToy),
            DgpSpec::Custom { chain } => Box::new(*chain),
        }
    }

    /// The enumerable form of the law, when it has one.
    pub fn discrete_law(&self) -> Option<Box<dyn DiscreteLaw>> {
        match self {
            DgpSpec::Sim1 => Some(Box::new(Sim1)),
            DgpSpec::AttToy => Some(Box::new(AttToy)),
            DgpSpec::Custom { chain } => Some(Box::new(*chain)),
            DgpSpec::Sim2 { .. } => None,
        }
    }
}

/// Draws `n` independent units from the observed-data law.
pub fn simulate(model: &dyn StructuralModel, n: usize, seed: u64) -> Result<LongitudinalFrame> {
    if n == 0 {
        return Err(GattError::Config("n must be at least 1".into()));
    }
    let tau = model.tau();
    let names: Vec<Vec<String>> = (1..=tau).map(|t| model.covariate_names(t)).collect();
    let mut cov: Vec<Vec<Vec<f64>>> = names.iter().map(|nm| vec![Vec::with_capacity(n); nm.len()]).collect();
    let mut treat = vec![Vec::with_capacity(n); tau];
    let mut y = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = PathState::with_capacity(tau);
    for _ in 0..n {
        state.l.clear();
        state.a.clear();
        for t in 1..=tau {
            let l = model.draw_covariates(t, &state, &mut rng);
            for (k, v) in l.iter().enumerate() {
                cov[t - 1][k].push(*v);
            }
            state.l.push(l);
            let a = model.draw_treatment(t, &state, &mut rng);
            treat[t - 1].push(a);
            state.a.push(a);
        }
        y.push(model.draw_outcome(&state, &mut rng));
    }
    let blocks = names.into_iter().zip(cov).map(|(nm, cols)| CovariateBlock::new(nm, cols)).collect();
    LongitudinalFrame::new(blocks, treat, y, model.family())
}

/// Path state of unit `i` of a frame up to and including `A_t`.
pub fn unit_state(frame: &LongitudinalFrame, i: usize, t: usize) -> PathState {
    let mut s = PathState::with_capacity(t);
    for u in 1..=t {
        s.l.push(frame.covariates(u).columns.iter().map(|c| c[i]).collect());
        s.a.push(frame.treatment(u)[i]);
    }
    s
}
