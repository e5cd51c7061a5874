//! Conditioning probabilities `G_t` and cumulated weights `alpha_t`, fitted
//! either by Riesz-loss minimization or by plug-in density ratios.

mod gseq;
mod loss;
mod plugin;

use serde::{Deserialize, Serialize};

pub use gseq::{fit_g_sequence, g_sequence_from_values, GSequence};
pub use loss::{fit_riesz_sequence, incoming_weights, riesz_loss, RieszCandidate};
pub use plugin::{fit_ratio_plugin_sequence, MAX_DISCRETE_LEVELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RieszMode {
    #[default]
    LossMinimization,
    PluginDiscrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
}

impl AlphaSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            sd: var.sqrt(),
        }
    }
}

/// Per-unit cumulated weights `alpha_t(A_t, H_t)` for `t` in `1..=tau`.
#[derive(Debug, Clone, Serialize)]
pub struct WeightFit {
    #[serde(skip)]
    pub observed: Vec<Vec<f64>>,
    /// Evaluations at the shifted treatment; loss path only.
    #[serde(skip)]
    pub shifted: Option<Vec<Vec<f64>>>,
    pub summaries: Vec<AlphaSummary>,
    pub ridged: bool,
    pub clamped_probabilities: usize,
}

impl WeightFit {
    pub fn new(observed: Vec<Vec<f64>>, shifted: Option<Vec<Vec<f64>>>, ridged: bool, clamped: usize) -> Self {
        let summaries = observed.iter().map(|v| AlphaSummary::of(v)).collect();
        Self { observed, shifted, summaries, ridged, clamped_probabilities: clamped }
    }

    pub fn tau(&self) -> usize {
        self.observed.len()
    }

    /// `alpha_t` at the observed treatment, with `alpha_0 = 1`.
    pub fn alpha(&self, t: usize) -> Vec<f64> {
        if t == 0 {
            vec![1.0; self.observed[0].len()]
        } else {
            self.observed[t - 1].clone()
        }
    }

    /// Replaces `alpha_t` by one at the listed times.
    pub fn override_with_ones(&mut self, times: &[usize]) {
        for &t in times {
            let n = self.observed[t - 1].len();
            self.observed[t - 1] = vec![1.0; n];
            if let Some(s) = self.shifted.as_mut() {
                s[t - 1] = vec![1.0; n];
            }
            self.summaries[t - 1] = AlphaSummary::of(&self.observed[t - 1]);
        }
    }
}
