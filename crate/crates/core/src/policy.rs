//! Declarative modified treatment policies `d_t(a_t, h_t)`.

use serde::{Deserialize, Serialize};

use crate::error::{GattError, Result};
use crate::frame::{HistoryLookup, LongitudinalFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftDirection {
    #[default]
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparator {
    pub fn holds(self, a: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => a < threshold,
            Comparator::Le => a <= threshold,
            Comparator::Gt => a > threshold,
            Comparator::Ge => a >= threshold,
            Comparator::Eq => a == threshold,
        }
    }
}

/// Support bound `u_t(h_t)` of a bounded additive shift: a constant or a
/// history column referenced by its wide name (e.g. `"L2_cap"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Constant(f64),
    Column(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyRule {
    Identity,
    Constant {
        value: f64,
    },
    /// Shift by `delta` in `direction`; with a bound, only when the shifted
    /// value stays inside it (`a + delta <= u` going up, `a - delta >= u`
    /// going down).
    AdditiveShift {
        delta: f64,
        #[serde(default)]
        bound: Option<Bound>,
        #[serde(default)]
        direction: ShiftDirection,
    },
    MultiplicativeShift {
        delta: f64,
    },
    /// Add `delta` when `a <comparator> threshold`, otherwise keep `a`.
    ThresholdShift {
        delta: f64,
        comparator: Comparator,
        threshold: f64,
    },
}

impl PolicyRule {
    pub fn is_identity(&self) -> bool {
        match self {
            PolicyRule::Identity => true,
            PolicyRule::AdditiveShift { delta, .. } | PolicyRule::ThresholdShift { delta, .. } => *delta == 0.0,
            PolicyRule::MultiplicativeShift { delta } => *delta == 1.0,
            PolicyRule::Constant { .. } => false,
        }
    }

    pub fn apply(&self, a: f64, h: &impl HistoryLookup) -> f64 {
        match self {
            PolicyRule::Identity => a,
            PolicyRule::Constant { value } => *value,
            PolicyRule::AdditiveShift { delta, bound, direction } => {
                let u = bound.as_ref().map(|b| match b {
                    Bound::Constant(c) => *c,
                    // Columns are checked against the frame before estimation;
                    // an unresolvable bound leaves the treatment unchanged.
                    Bound::Column(name) => h.lookup(name).unwrap_or(f64::NAN),
                });
                match (direction, u) {
                    (ShiftDirection::Up, None) => a + delta,
                    (ShiftDirection::Down, None) => a - delta,
                    (ShiftDirection::Up, Some(u)) => {
                        if a <= u - delta {
                            a + delta
                        } else {
                            a
                        }
                    }
                    (ShiftDirection::Down, Some(u)) => {
                        if a >= u + delta {
                            a - delta
                        } else {
                            a
                        }
                    }
                }
            }
            PolicyRule::MultiplicativeShift { delta } => a * delta,
            PolicyRule::ThresholdShift { delta, comparator, threshold } => {
                if comparator.holds(a, *threshold) {
                    a + delta
                } else {
                    a
                }
            }
        }
    }
}

/// One rule per time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicySpec {
    pub rules: Vec<PolicyRule>,
}

impl PolicySpec {
    pub fn new(rules: Vec<PolicyRule>) -> Self {
        Self { rules }
    }

    /// The same rule at every one of `tau` time points.
    pub fn uniform(rule: PolicyRule, tau: usize) -> Self {
        Self { rules: vec![rule; tau] }
    }

    pub fn identity(tau: usize) -> Self {
        Self::uniform(PolicyRule::Identity, tau)
    }

    pub fn tau(&self) -> usize {
        self.rules.len()
    }

    pub fn rule(&self, t: usize) -> &PolicyRule {
        &self.rules[t - 1]
    }

    /// `d_t(a, h)` for `t` in `1..=tau`.
    pub fn apply(&self, t: usize, a: f64, h: &impl HistoryLookup) -> f64 {
        self.rules[t - 1].apply(a, h)
    }

    /// `A_t^d = d_t(A_t, H_t)` for every unit of the frame.
    pub fn shifted_treatment(&self, frame: &LongitudinalFrame, t: usize) -> Vec<f64> {
        frame
            .treatment(t)
            .iter()
            .enumerate()
            .map(|(i, &a)| self.apply(t, a, &frame.history(i, t)))
            .collect()
    }

    /// Checks that the policy matches the frame's horizon and that every
    /// bound column is part of the history at its time point.
    pub fn validate(&self, frame: &LongitudinalFrame) -> Result<()> {
        if self.tau() != frame.tau() {
            return Err(GattError::Config(format!(
                "policy has {} rules but the data has {} time points",
                self.tau(),
                frame.tau()
            )));
        }
        for (idx, rule) in self.rules.iter().enumerate() {
            let t = idx + 1;
            if let PolicyRule::AdditiveShift { bound: Some(Bound::Column(name)), .. } = rule {
                if frame.history(0, t).lookup(name).is_none() {
                    return Err(GattError::Config(format!(
                        "policy bound column '{name}' is not in the history at time {t}"
                    )));
                }
            }
            let finite = match rule {
                PolicyRule::Identity => true,
                PolicyRule::Constant { value } => value.is_finite(),
                PolicyRule::AdditiveShift { delta, bound, .. } => {
                    delta.is_finite() && !matches!(bound, Some(Bound::Constant(c)) if !c.is_finite())
                }
                PolicyRule::MultiplicativeShift { delta } => delta.is_finite(),
                PolicyRule::ThresholdShift { delta, threshold, .. } => delta.is_finite() && threshold.is_finite(),
            };
            if !finite {
                return Err(GattError::Config(format!("policy rule at time {t} has a non-finite parameter")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::NoHistory;
    use proptest::prelude::*;

    #[test]
    fn bounded_additive_shift() {
        let rule = PolicyRule::AdditiveShift {
            delta: 1.0,
            bound: Some(Bound::Constant(5.0)),
            direction: ShiftDirection::Up,
        };
        assert_eq!(rule.apply(4.0, &NoHistory), 5.0);
        assert_eq!(rule.apply(4.5, &NoHistory), 4.5);
    }

    #[test]
    fn identity_and_threshold_rules() {
        assert_eq!(PolicyRule::Identity.apply(3.7, &NoHistory), 3.7);
        let sim1 = PolicyRule::ThresholdShift { delta: -1.0, comparator: Comparator::Ge, threshold: 1.0 };
        assert_eq!(sim1.apply(3.0, &NoHistory), 2.0);
        assert_eq!(sim1.apply(0.0, &NoHistory), 0.0);
    }

    #[test]
    fn rules_parse_from_json() {
        let rules: PolicySpec = serde_json::from_str(
            r#"[{"type":"identity"},
                {"type":"additive_shift","delta":1,"bound":"L2_cap"},
                {"type":"threshold_shift","delta":-1,"comparator":"ge","threshold":1}]"#,
        )
        .unwrap();
        assert_eq!(rules.tau(), 3);
        assert!(matches!(rules.rule(2), PolicyRule::AdditiveShift { bound: Some(Bound::Column(c)), .. } if c == "L2_cap"));
        let bad = serde_json::from_str::<PolicySpec>(r#"[{"type":"constant","value":1,"extra":2}]"#);
        assert!(bad.is_err());
    }

    fn any_rule() -> impl Strategy<Value = PolicyRule> {
        prop_oneof![
            Just(PolicyRule::Identity),
            (-5.0..5.0f64).prop_map(|value| PolicyRule::Constant { value }),
            (-2.0..2.0f64, proptest::option::of(-5.0..5.0f64)).prop_map(|(delta, b)| PolicyRule::AdditiveShift {
                delta,
                bound: b.map(Bound::Constant),
                direction: ShiftDirection::Up,
            }),
            (0.1..2.0f64).prop_map(|delta| PolicyRule::MultiplicativeShift { delta }),
            (-2.0..2.0f64, -3.0..3.0f64).prop_map(|(delta, threshold)| PolicyRule::ThresholdShift {
                delta,
                comparator: Comparator::Ge,
                threshold,
            }),
        ]
    }

    proptest! {
        #[test]
        fn constant_absorbs_any_rule(rule in any_rule(), v in -5.0..5.0f64, a in -10.0..10.0f64) {
            let c = PolicyRule::Constant { value: v };
            prop_assert_eq!(c.apply(rule.apply(a, &NoHistory), &NoHistory), v);
        }

        #[test]
        fn identity_and_constant_are_idempotent(v in -5.0..5.0f64, a in -10.0..10.0f64) {
            let id = PolicyRule::Identity;
            prop_assert_eq!(id.apply(id.apply(a, &NoHistory), &NoHistory), a);
            let c = PolicyRule::Constant { value: v };
            prop_assert_eq!(c.apply(c.apply(a, &NoHistory), &NoHistory), c.apply(a, &NoHistory));
        }

        #[test]
        fn apply_is_deterministic(rule in any_rule(), a in -10.0..10.0f64) {
            prop_assert_eq!(rule.apply(a, &NoHistory).to_bits(), rule.apply(a, &NoHistory).to_bits());
        }
    }
}
