//! Conditioning sets `B_t` on the treatment trajectory and the comparability
//! check between a policy and a conditioning specification.

use serde::{Deserialize, Serialize};

use crate::error::{GattError, Result};
use crate::frame::LongitudinalFrame;
use crate::policy::PolicySpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TreatmentSet {
    All,
    /// Exact-equality membership on the coded treatment values.
    ValueSet { values: Vec<f64> },
    /// A missing `lower` is `-inf`, a missing `upper` is `+inf`.
    Interval {
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
        #[serde(default = "closed")]
        lower_closed: bool,
        #[serde(default = "closed")]
        upper_closed: bool,
    },
}

fn closed() -> bool {
    true
}

impl TreatmentSet {
    pub fn value(v: f64) -> Self {
        TreatmentSet::ValueSet { values: vec![v] }
    }

    pub fn is_all(&self) -> bool {
        matches!(self, TreatmentSet::All)
    }

    pub fn contains(&self, a: f64) -> bool {
        match self {
            TreatmentSet::All => true,
            TreatmentSet::ValueSet { values } => values.iter().any(|&v| v == a),
            TreatmentSet::Interval { lower, upper, lower_closed, upper_closed } => {
                let above = match lower {
                    None => true,
                    Some(l) if *lower_closed => a >= *l,
                    Some(l) => a > *l,
                };
                let below = match upper {
                    None => true,
                    Some(u) if *upper_closed => a <= *u,
                    Some(u) => a < *u,
                };
                above && below
            }
        }
    }
}

/// One treatment set per time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConditioningSpec {
    pub sets: Vec<TreatmentSet>,
}

impl ConditioningSpec {
    pub fn new(sets: Vec<TreatmentSet>) -> Self {
        Self { sets }
    }

    pub fn trivial(tau: usize) -> Self {
        Self { sets: vec![TreatmentSet::All; tau] }
    }

    /// Trivial everywhere except `B_t = set` at the listed times.
    pub fn at(tau: usize, entries: impl IntoIterator<Item = (usize, TreatmentSet)>) -> Self {
        let mut spec = Self::trivial(tau);
        for (t, set) in entries {
            spec.sets[t - 1] = set;
        }
        spec
    }

    pub fn tau(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, t: usize) -> &TreatmentSet {
        &self.sets[t - 1]
    }

    pub fn is_trivial(&self) -> bool {
        self.sets.iter().all(TreatmentSet::is_all)
    }

    /// True when `B_s` is trivial for every `s >= from_t`.
    pub fn is_trivial_from(&self, from_t: usize) -> bool {
        self.sets.iter().skip(from_t.saturating_sub(1)).all(TreatmentSet::is_all)
    }

    pub fn validate(&self, frame: &LongitudinalFrame) -> Result<()> {
        if self.tau() != frame.tau() {
            return Err(GattError::Config(format!(
                "conditioning has {} sets but the data has {} time points",
                self.tau(),
                frame.tau()
            )));
        }
        for (idx, set) in self.sets.iter().enumerate() {
            let bad = match set {
                TreatmentSet::All => false,
                TreatmentSet::ValueSet { values } => values.is_empty() || values.iter().any(|v| !v.is_finite()),
                TreatmentSet::Interval { lower, upper, .. } => {
                    lower.is_some_and(|l| !l.is_finite()) || upper.is_some_and(|u| !u.is_finite())
                }
            };
            if bad {
                return Err(GattError::Config(format!("conditioning set at time {} is malformed", idx + 1)));
            }
        }
        Ok(())
    }
}

/// `1{A_s in B_s for every s >= from_t}` per unit; `from_t = tau + 1` gives
/// all ones.
pub fn conditioning_indicator(frame: &LongitudinalFrame, spec: &ConditioningSpec, from_t: usize) -> Vec<bool> {
    let tau = frame.tau();
    assert!(from_t >= 1 && from_t <= tau + 1, "from_t out of range");
    let mut ind = vec![true; frame.n()];
    for s in from_t..=tau {
        let set = spec.set(s);
        if set.is_all() {
            continue;
        }
        for (flag, &a) in ind.iter_mut().zip(frame.treatment(s)) {
            *flag = *flag && set.contains(a);
        }
    }
    ind
}

/// All indicators at once: entry `t - 1` holds `conditioning_indicator(.., t)`
/// for `t` in `1..=tau + 1`.
pub fn indicator_table(frame: &LongitudinalFrame, spec: &ConditioningSpec) -> Vec<Vec<bool>> {
    let tau = frame.tau();
    let mut table = vec![vec![true; frame.n()]; tau + 1];
    for t in (1..=tau).rev() {
        let set = spec.set(t);
        let (head, tail) = table.split_at_mut(t);
        let next = &tail[0];
        for ((flag, &nxt), &a) in head[t - 1].iter_mut().zip(next).zip(frame.treatment(t)) {
            *flag = nxt && set.contains(a);
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Comparability {
    Valid { k: usize },
    Violation { time: usize, reason: String },
}

/// Smallest `k` such that the policy is the identity for `t < k` and
/// `B_t` is trivial for `t > k`.
pub fn validate_comparability(policy: &PolicySpec, conditioning: &ConditioningSpec) -> Comparability {
    let tau = policy.tau().min(conditioning.tau());
    let first_intervention = (1..=tau).find(|&t| !policy.rule(t).is_identity()).unwrap_or(tau);
    let last_conditioned = (1..=tau).rev().find(|&t| !conditioning.set(t).is_all()).unwrap_or(0);
    let k = last_conditioned.max(1);
    if k <= first_intervention {
        Comparability::Valid { k }
    } else {
        let time = (first_intervention + 1..=tau)
            .find(|&t| !conditioning.set(t).is_all())
            .unwrap_or(last_conditioned);
        Comparability::Violation {
            time,
            reason: format!(
                "conditioning set at time {time} is non-trivial after the intervention starts at time {first_intervention}"
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{CovariateBlock, OutcomeFamily};
    use crate::policy::PolicyRule;
    use proptest::prelude::*;

    fn frame_with(treatments: Vec<Vec<f64>>) -> LongitudinalFrame {
        let n = treatments[0].len();
        let tau = treatments.len();
        LongitudinalFrame::new(
            vec![CovariateBlock::empty(); tau],
            treatments,
            vec![0.0; n],
            OutcomeFamily::Gaussian,
        )
        .unwrap()
    }

    #[test]
    fn trivial_spec_gives_all_ones() {
        let f = frame_with(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 3.0]]);
        for t in 1..=3 {
            assert!(conditioning_indicator(&f, &ConditioningSpec::trivial(2), t).iter().all(|&b| b));
        }
    }

    #[test]
    fn conditions_only_on_listed_times() {
        let f = frame_with(vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        let spec = ConditioningSpec::at(2, [(1, TreatmentSet::value(1.0))]);
        assert_eq!(conditioning_indicator(&f, &spec, 1), vec![true, false]);
    }

    #[test]
    fn single_set_membership_at_last_time() {
        let f = frame_with(vec![vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![1.0, 3.0]]);
        let spec = ConditioningSpec::at(4, [(4, TreatmentSet::value(1.0))]);
        assert_eq!(conditioning_indicator(&f, &spec, 4), vec![true, false]);
        assert_eq!(conditioning_indicator(&f, &spec, 5), vec![true, true]);
    }

    #[test]
    fn interval_membership() {
        let set = TreatmentSet::Interval { lower: Some(9.0), upper: None, lower_closed: false, upper_closed: true };
        assert!(!set.contains(9.0));
        assert!(set.contains(9.5));
        assert!(set.contains(1e300));
    }

    #[test]
    fn comparability_examples() {
        let att = validate_comparability(
            &PolicySpec::new(vec![PolicyRule::Constant { value: 0.0 }]),
            &ConditioningSpec::new(vec![TreatmentSet::value(1.0)]),
        );
        assert_eq!(att, Comparability::Valid { k: 1 });

        let two = validate_comparability(
            &PolicySpec::new(vec![PolicyRule::Identity, PolicyRule::Constant { value: 1.0 }]),
            &ConditioningSpec::new(vec![TreatmentSet::value(1.0), TreatmentSet::value(1.0)]),
        );
        assert_eq!(two, Comparability::Valid { k: 2 });

        let bad = validate_comparability(
            &PolicySpec::uniform(PolicyRule::Constant { value: 0.0 }, 2),
            &ConditioningSpec::at(2, [(2, TreatmentSet::value(1.0))]),
        );
        assert!(matches!(bad, Comparability::Violation { time: 2, .. }));
    }

    proptest! {
        #[test]
        fn indicator_recursion(
            a in proptest::collection::vec(proptest::collection::vec(0u8..4, 6), 3),
            members in proptest::collection::vec(proptest::option::of(0u8..4), 3),
        ) {
            let treatments: Vec<Vec<f64>> = a.iter().map(|c| c.iter().map(|&v| v as f64).collect()).collect();
            let f = frame_with(treatments);
            let spec = ConditioningSpec::new(members.iter().map(|m| match m {
                None => TreatmentSet::All,
                Some(v) => TreatmentSet::ValueSet { values: vec![*v as f64, (*v as f64) + 1.0] },
            }).collect());
            let table = indicator_table(&f, &spec);
            for t in 1..=3 {
                let here = conditioning_indicator(&f, &spec, t);
                let next = conditioning_indicator(&f, &spec, t + 1);
                prop_assert_eq!(&table[t - 1], &here);
                for i in 0..f.n() {
                    prop_assert_eq!(here[i], next[i] && spec.set(t).contains(f.treatment(t)[i]));
                }
            }
        }
    }
}
