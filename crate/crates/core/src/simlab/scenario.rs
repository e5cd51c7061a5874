//! The four consistency scenarios for `m_t` and `alpha_t`.

use serde::{Deserialize, Serialize};

use crate::error::{GattError, Result};
use crate::task::Degrade;

/// Scenario id on the `{m_t, alpha_t}` consistency grid. Degraded `m_t` is
/// intercept-only; degraded `alpha_t` is one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Scenario {
    /// Both sequences fit consistently.
    AllConsistent = 1,
    /// `m_t` degraded in the first half, `alpha_t` in the second.
    EarlyOutcome = 2,
    /// `m_tau` degraded, `alpha_t` degraded before `tau`.
    LateOutcome = 3,
    /// Both degraded everywhere.
    AllDegraded = 4,
}

impl TryFrom<u8> for Scenario {
    type Error = GattError;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Scenario::AllConsistent),
            2 => Ok(Scenario::EarlyOutcome),
            3 => Ok(Scenario::LateOutcome),
            4 => Ok(Scenario::AllDegraded),
            _ => Err(GattError::Config(format!("scenario must be 1..=4, got {v}"))),
        }
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        s as u8
    }
}

impl Scenario {
    pub fn id(self) -> u8 {
        self as u8
    }

    /// Degradation pattern at horizon `tau`. With `tau = 4` scenario 2
    /// degrades `m_1, m_2` and `alpha_3, alpha_4`; scenario 3 degrades `m_4`
    /// and `alpha_1..alpha_3`.
    pub fn degrade(self, tau: usize) -> Degrade {
        let all: Vec<usize> = (1..=tau).collect();
        let half = tau / 2;
        match self {
            Scenario::AllConsistent => Degrade::default(),
            Scenario::EarlyOutcome => {
                Degrade { m_intercept_only: (1..=half).collect(), alpha_ones: (half + 1..=tau).collect() }
            }
            Scenario::LateOutcome => Degrade { m_intercept_only: vec![tau], alpha_ones: (1..tau).collect() },
            Scenario::AllDegraded => Degrade { m_intercept_only: all.clone(), alpha_ones: all },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_period_grid() {
        assert!(Scenario::AllConsistent.degrade(4).is_empty());
        let s2 = Scenario::EarlyOutcome.degrade(4);
        assert_eq!((s2.m_intercept_only, s2.alpha_ones), (vec![1, 2], vec![3, 4]));
        let s3 = Scenario::LateOutcome.degrade(4);
        assert_eq!((s3.m_intercept_only, s3.alpha_ones), (vec![4], vec![1, 2, 3]));
        let s4 = Scenario::AllDegraded.degrade(4);
        assert_eq!((s4.m_intercept_only, s4.alpha_ones), (vec![1, 2, 3, 4], vec![1, 2, 3, 4]));
    }

    #[test]
    fn parses_from_ids() {
        let s: Vec<Scenario> = serde_json::from_str("[1, 4]").unwrap();
        assert_eq!(s, vec![Scenario::AllConsistent, Scenario::AllDegraded]);
        assert!(serde_json::from_str::<Scenario>("5").is_err());
    }
}
