use serde::{Deserialize, Serialize};

use super::{eif::mean_sd, EstimateResult, Z_95};
use crate::error::{GattError, Result};
use crate::task::EstimatorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMethod {
    /// Both estimates come from the same units; influence functions combined.
    PairedEif,
    /// Standard errors combined as if the estimates were independent.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub estimator: EstimatorKind,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    pub se: f64,
    pub ci: [f64; 2],
    pub method: RatioMethod,
}

/// `theta_1 / theta_2` with a delta-method standard error.
pub fn ratio_estimate(num: &EstimateResult, den: &EstimateResult) -> Result<RatioEstimate> {
    let (t1, t2) = (num.theta_hat, den.theta_hat);
    if t2 == 0.0 {
        return Err(GattError::Config("ratio denominator estimate is zero".into()));
    }
    let ratio = t1 / t2;
    let (se, method) = match (&num.eif, &den.eif) {
        (Some(d1), Some(d2)) if d1.len() == d2.len() && !d1.is_empty() => {
            let d: Vec<f64> = d1.iter().zip(d2).map(|(a, b)| a / t2 - t1 * b / (t2 * t2)).collect();
            let (_, sd) = mean_sd(&d);
            (sd / (d.len() as f64).sqrt(), RatioMethod::PairedEif)
        }
        _ => match (num.se, den.se) {
            (Some(s1), Some(s2)) => ((s1 * s1 / (t2 * t2) + t1 * t1 * s2 * s2 / t2.powi(4)).sqrt(), RatioMethod::Independent),
            _ => return Err(GattError::Config("ratio needs standard errors or influence functions on both results".into())),
        },
    };
    Ok(RatioEstimate {
        estimator: num.estimator,
        numerator: t1,
        denominator: t2,
        ratio,
        se,
        ci: [ratio - Z_95 * se, ratio + Z_95 * se],
        method,
    })
}
