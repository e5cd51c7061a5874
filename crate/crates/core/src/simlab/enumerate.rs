//! Exact population quantities for laws with finite support.

use std::cell::RefCell;
use std::collections::HashMap;

use super::dgp::{unit_state, DiscreteLaw, PathState, StateView};
use crate::conditioning::ConditioningSpec;
use crate::error::Result;
use crate::estimators::{Nuisances, SequentialRegressor};
use crate::frame::LongitudinalFrame;
use crate::policy::PolicySpec;
use crate::riesz::{g_sequence_from_values, WeightFit};

type Key = Vec<u64>;

fn key(state: &PathState) -> Key {
    state.l.iter().flatten().chain(&state.a).map(|v| v.to_bits()).collect()
}

/// Exact `G_t`, `m_t`, `alpha_t`, `theta` and the linear functionals
/// `Psi_t` of a discrete law, computed by walking its probability tree.
pub struct ExactLaw<'a> {
    law: &'a dyn DiscreteLaw,
    policy: &'a PolicySpec,
    cond: &'a ConditioningSpec,
    names: Vec<Vec<String>>,
    g_memo: RefCell<HashMap<Key, f64>>,
    m_memo: RefCell<HashMap<Key, f64>>,
}

impl<'a> ExactLaw<'a> {
    pub fn new(law: &'a dyn DiscreteLaw, policy: &'a PolicySpec, cond: &'a ConditioningSpec) -> Self {
        let names = (1..=law.tau()).map(|t| law.covariate_names(t)).collect();
        Self { law, policy, cond, names, g_memo: RefCell::default(), m_memo: RefCell::default() }
    }

    pub fn tau(&self) -> usize {
        self.law.tau()
    }

    /// `d_t` applied to the last treatment of `state`.
    pub fn shift(&self, t: usize, state: &PathState) -> f64 {
        self.policy.apply(t, state.a[t - 1], &StateView { state, names: &self.names })
    }

    fn shifted(&self, t: usize, state: &PathState) -> PathState {
        let mut s = state.clone();
        s.a[t - 1] = self.shift(t, state);
        s
    }

    /// Children `(state through A_{t+1}, probability)` of a node through `A_t`
    /// whose treatment lies in `B_{t+1}`.
    fn children_in_set(&self, t: usize, state: &PathState) -> Vec<(PathState, f64)> {
        let mut out = Vec::new();
        for (l, pl) in self.law.covariate_pmf(t + 1, state) {
            let mut with_l = state.clone();
            with_l.l.push(l);
            for (a, pa) in self.law.treatment_pmf(t + 1, &with_l) {
                if pl * pa > 0.0 && self.cond.set(t + 1).contains(a) {
                    let mut child = with_l.clone();
                    child.a.push(a);
                    out.push((child, pl * pa));
                }
            }
        }
        out
    }

    fn roots_in_set(&self) -> Vec<(PathState, f64)> {
        self.children_in_set(0, &PathState::default())
    }

    /// `G_t(a_t, h_t)` for a state through `A_t`.
    pub fn big_g(&self, t: usize, state: &PathState) -> f64 {
        if t == self.tau() || self.cond.is_trivial_from(t + 1) {
            return 1.0;
        }
        let k = key(state);
        if let Some(&v) = self.g_memo.borrow().get(&k) {
            return v;
        }
        let v = self.children_in_set(t, state).iter().map(|(c, p)| p * self.big_g(t + 1, c)).sum();
        self.g_memo.borrow_mut().insert(k, v);
        v
    }

    /// `P(A_{1:tau} in B_{1:tau})`.
    pub fn g0(&self) -> f64 {
        self.roots_in_set().iter().map(|(c, p)| p * self.big_g(1, c)).sum()
    }

    /// Sequential regression `m_t(a_t, h_t)`; zero where `G_t` vanishes.
    pub fn m(&self, t: usize, state: &PathState) -> f64 {
        if t == self.tau() {
            return self.law.outcome_mean(state);
        }
        let k = key(state);
        if let Some(&v) = self.m_memo.borrow().get(&k) {
            return v;
        }
        let g = self.big_g(t, state);
        let v = if g > 0.0 {
            self.children_in_set(t, state)
                .iter()
                .map(|(c, p)| p * self.big_g(t + 1, c) * self.m(t + 1, &self.shifted(t + 1, c)))
                .sum::<f64>()
                / g
        } else {
            0.0
        };
        self.m_memo.borrow_mut().insert(k, v);
        v
    }

    /// Identified parameter `E[m_1(A_1^d, L_1) | A in B]`.
    pub fn theta(&self) -> f64 {
        let num: f64 = self.roots_in_set().iter().map(|(c, p)| p * self.big_g(1, c) * self.m(1, &self.shifted(1, c))).sum();
        num / self.g0()
    }

    fn treatment_prob(&self, t: usize, history: &PathState, a: f64) -> f64 {
        self.law.treatment_pmf(t, history).into_iter().filter(|(v, _)| *v == a).map(|(_, p)| p).sum()
    }

    /// Density ratio `r_k` at the last treatment of a state through `A_k`.
    fn ratio(&self, k: usize, state: &PathState) -> f64 {
        let mut history = state.clone();
        history.a.truncate(k - 1);
        let g_prev = if k == 1 {
            self.g0()
        } else {
            let mut before = history.clone();
            before.l.truncate(k - 1);
            self.big_g(k - 1, &before)
        };
        let observed = state.a[k - 1];
        let mut numer = 0.0;
        for (a, pa) in self.law.treatment_pmf(k, &history) {
            if pa == 0.0 || !self.cond.set(k).contains(a) {
                continue;
            }
            let mut alt = history.clone();
            alt.a.push(a);
            if self.shift(k, &alt) == observed {
                numer += self.big_g(k, &alt) / g_prev * pa;
            }
        }
        let denom = self.treatment_prob(k, &history, observed);
        if denom > 0.0 {
            numer / denom
        } else {
            0.0
        }
    }

    /// `alpha_t = prod_{k <= t} r_k` for a state through `A_t`.
    pub fn alpha(&self, t: usize, state: &PathState) -> f64 {
        (1..=t)
            .map(|k| {
                let mut prefix = state.clone();
                prefix.l.truncate(k);
                prefix.a.truncate(k);
                self.ratio(k, &prefix)
            })
            .product()
    }

    /// `Psi_t(f)`: plug `f` in at `(A_t^d, H_t)`, then take nested
    /// conditional expectations back to time one within the conditioning set.
    pub fn psi(&self, t: usize, f: &dyn Fn(&PathState) -> f64) -> f64 {
        let num: f64 = self.roots_in_set().iter().map(|(c, p)| p * self.big_g(1, c) * self.psi_inner(1, t, c, f)).sum();
        num / self.g0()
    }

    fn psi_inner(&self, s: usize, t: usize, state: &PathState, f: &dyn Fn(&PathState) -> f64) -> f64 {
        let node = self.shifted(s, state);
        if s == t {
            return f(&node);
        }
        let g = self.big_g(s, &node);
        if g == 0.0 {
            return 0.0;
        }
        self.children_in_set(s, &node).iter().map(|(c, p)| p * self.big_g(s + 1, c) * self.psi_inner(s + 1, t, c, f)).sum::<f64>()
            / g
    }

    /// `E[f(A_t, H_t)]` under the observed law.
    pub fn expectation(&self, t: usize, f: &dyn Fn(&PathState) -> f64) -> f64 {
        self.expect_from(0, t, &PathState::default(), 1.0, f)
    }

    fn expect_from(&self, s: usize, t: usize, state: &PathState, p: f64, f: &dyn Fn(&PathState) -> f64) -> f64 {
        if s == t {
            return p * f(state);
        }
        let mut total = 0.0;
        for (l, pl) in self.law.covariate_pmf(s + 1, state) {
            let mut with_l = state.clone();
            with_l.l.push(l);
            for (a, pa) in self.law.treatment_pmf(s + 1, &with_l) {
                if pl * pa > 0.0 {
                    let mut child = with_l.clone();
                    child.a.push(a);
                    total += self.expect_from(s + 1, t, &child, p * pl * pa, f);
                }
            }
        }
        total
    }

    /// Counterfactual mean among units whose natural treatment values fall
    /// in the conditioning set, by walking the intervened tree. This does not
    /// use any identification formula.
    pub fn structural_truth(&self) -> f64 {
        let (num, den) = self.structural_from(0, &PathState::default(), 1.0);
        num / den
    }

    fn structural_from(&self, s: usize, state: &PathState, p: f64) -> (f64, f64) {
        if s == self.tau() {
            return (p * self.law.outcome_mean(state), p);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (l, pl) in self.law.covariate_pmf(s + 1, state) {
            let mut with_l = state.clone();
            with_l.l.push(l);
            for (a, pa) in self.law.treatment_pmf(s + 1, &with_l) {
                if pl * pa == 0.0 || !self.cond.set(s + 1).contains(a) {
                    continue;
                }
                let mut child = with_l.clone();
                child.a.push(a);
                child.a[s] = self.shift(s + 1, &child);
                let (n, d) = self.structural_from(s + 1, &child, p * pl * pa);
                num += n;
                den += d;
            }
        }
        (num, den)
    }

    /// Exact nuisances evaluated at every unit of a frame drawn from the law.
    pub fn nuisances_for(&self, frame: &LongitudinalFrame) -> FrameNuisances {
        let tau = self.tau();
        let mut out = FrameNuisances {
            g_observed: vec![Vec::with_capacity(frame.n()); tau],
            alpha: vec![Vec::with_capacity(frame.n()); tau],
            m_observed: vec![Vec::with_capacity(frame.n()); tau],
            m_shifted: vec![Vec::with_capacity(frame.n()); tau],
            g0: self.g0(),
        };
        for i in 0..frame.n() {
            let full = unit_state(frame, i, tau);
            for t in 1..=tau {
                let mut s = full.clone();
                s.l.truncate(t);
                s.a.truncate(t);
                out.g_observed[t - 1].push(self.big_g(t, &s));
                out.alpha[t - 1].push(self.alpha(t, &s));
                out.m_observed[t - 1].push(self.m(t, &s));
                out.m_shifted[t - 1].push(self.m(t, &self.shifted(t, &s)));
            }
        }
        out
    }
}

/// Per-unit exact nuisances; index `t - 1` holds time `t`.
#[derive(Debug, Clone)]
pub struct FrameNuisances {
    pub g0: f64,
    pub g_observed: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub m_observed: Vec<Vec<f64>>,
    pub m_shifted: Vec<Vec<f64>>,
}

impl FrameNuisances {
    /// `G_t` and `alpha_t` in the form the estimators take.
    pub fn nuisances(&self, frame: &LongitudinalFrame, cond: &ConditioningSpec) -> Nuisances {
        Nuisances {
            g: g_sequence_from_values(frame, cond, self.g_observed.clone(), self.g0),
            weights: WeightFit::new(self.alpha.clone(), None, false, 0),
        }
    }

    /// A regressor that ignores its pseudo-outcome and returns the exact `m_t`.
    pub fn regressor(&self) -> ExactRegressor<'_> {
        ExactRegressor { fits: self }
    }
}

pub struct ExactRegressor<'a> {
    fits: &'a FrameNuisances,
}

impl SequentialRegressor for ExactRegressor<'_> {
    fn regress(&self, t: usize, _pseudo: &[f64], _eligible: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.fits.m_observed[t - 1].clone(), self.fits.m_shifted[t - 1].clone()))
    }
}
