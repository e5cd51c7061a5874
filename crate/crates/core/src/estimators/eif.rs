use super::sequential::SequentialFits;
use crate::riesz::{GSequence, WeightFit};

/// Per-unit efficient influence function
/// `D = sum_{t=0}^{tau} alpha_t * 1{A_{t+1:tau} in B_{t+1:tau}} / G_t * (m_{t+1}(A^d_{t+1}) - m_t(A_t))`
/// with `alpha_0 = 1`, `m_0 = theta`, `G_0` the stratum share and `m_{tau+1} = Y`.
pub fn compute_eif(y: &[f64], g: &GSequence, weights: &WeightFit, fits: &SequentialFits, theta: f64) -> Vec<f64> {
    let n = y.len();
    let tau = fits.observed.len();
    let mut d = vec![0.0; n];
    for (i, di) in d.iter_mut().enumerate() {
        if g.indicators[0][i] {
            *di += (fits.shifted[0][i] - theta) / g.g0;
        }
    }
    for t in 1..=tau {
        let next = fits.next_shifted(t, y);
        let alpha = &weights.observed[t - 1];
        let gt = &g.observed[t - 1];
        let ind = &g.indicators[t];
        for i in 0..n {
            if ind[i] {
                d[i] += alpha[i] / gt[i] * (next[i] - fits.observed[t - 1][i]);
            }
        }
    }
    d
}

/// Targeting weights `omega_t = 1{A_{t+1:tau} in B_{t+1:tau}} / G_t * alpha_t`.
pub fn targeting_weights(g: &GSequence, weights: &WeightFit) -> Vec<Vec<f64>> {
    (1..=weights.tau())
        .map(|t| {
            let ind = &g.indicators[t];
            weights.observed[t - 1]
                .iter()
                .zip(&g.observed[t - 1])
                .zip(ind)
                .map(|((a, gt), &b)| if b { a / gt } else { 0.0 })
                .collect()
        })
        .collect()
}

pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}
