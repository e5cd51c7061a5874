//! One-hidden-layer ReLU network trained with Adam on minibatches.
//!
//! The trainer is generic over an [`Objective`] so the same network serves
//! regression (one input view) and the Riesz loss (observed and shifted
//! views of the same unit).

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::glm::expit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden_units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self { hidden_units: 25, epochs: 500, learning_rate: 1e-3, l2_penalty: 1e-4, batch_size: 64 }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.hidden_units == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err("mlp hidden_units, epochs and batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err("mlp learning_rate must be positive".into());
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err("mlp l2_penalty must be nonnegative".into());
        }
        Ok(())
    }
}

/// Transform from the network's raw output to the prediction scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Head {
    Identity,
    Logistic,
    Softplus,
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Differentiable training loss. `raw[v][k]` is the raw output for view `v`
/// of unit `rows[k]`; implementations write `d loss / d raw` into `grad` and
/// return the summed (not averaged) loss over `rows`.
pub(crate) trait Objective {
    fn eval(&self, rows: &[usize], raw: &[Vec<f64>], grad: &mut [Vec<f64>]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mlp {
    p: usize,
    h: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// `[w1 (h x p, row-major), b1 (h), w2 (h), b2]`
    theta: Vec<f64>,
    head: Head,
}

impl Mlp {
    fn new(x: &DMatrix<f64>, h: usize, head: Head, output_bias: f64, rng: &mut ChaCha8Rng) -> Self {
        let (n, p) = x.shape();
        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 0..p {
            let col = x.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            center[j] = mean;
            if var > 1e-24 {
                scale[j] = var.sqrt();
            }
        }
        let mut theta = vec![0.0; h * p + 2 * h + 1];
        let he_in = Normal::new(0.0, (2.0 / p.max(1) as f64).sqrt()).expect("finite sd");
        let he_out = Normal::new(0.0, (1.0 / h as f64).sqrt()).expect("finite sd");
        for v in &mut theta[..h * p] {
            *v = he_in.sample(rng);
        }
        for v in &mut theta[h * p + h..h * p + 2 * h] {
            *v = he_out.sample(rng);
        }
        theta[h * p + 2 * h] = output_bias;
        Self { p, h, center, scale, theta, head }
    }

    fn standardize(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for j in 0..self.p {
            for v in z.column_mut(j).iter_mut() {
                *v = (*v - self.center[j]) / self.scale[j];
            }
        }
        z
    }

    /// Raw outputs and hidden pre-activations for standardized rows.
    fn forward(&self, xs: &DMatrix<f64>, rows: &[usize], raw: &mut Vec<f64>, pre: &mut Vec<f64>) {
        let (h, p) = (self.h, self.p);
        let (w1, rest) = self.theta.split_at(h * p);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        raw.clear();
        pre.clear();
        for &i in rows {
            let mut out = b2[0];
            for k in 0..h {
                let mut z = b1[k];
                let wk = &w1[k * p..(k + 1) * p];
                for j in 0..p {
                    z += wk[j] * xs[(i, j)];
                }
                pre.push(z);
                if z > 0.0 {
                    out += w2[k] * z;
                }
            }
            raw.push(out);
        }
    }

    /// Accumulates the parameter gradient for `d loss / d raw = draw`.
    fn backward(&self, xs: &DMatrix<f64>, rows: &[usize], pre: &[f64], draw: &[f64], g: &mut [f64]) {
        let (h, p) = (self.h, self.p);
        let w2 = &self.theta[h * p + h..h * p + 2 * h];
        for (r, &i) in rows.iter().enumerate() {
            let d = draw[r];
            if d == 0.0 {
                continue;
            }
            g[h * p + 2 * h] += d;
            for k in 0..h {
                let z = pre[r * h + k];
                if z <= 0.0 {
                    continue;
                }
                g[h * p + h + k] += d * z;
                let dz = d * w2[k];
                g[h * p + k] += dz;
                let gk = &mut g[k * p..(k + 1) * p];
                for j in 0..p {
                    gk[j] += dz * xs[(i, j)];
                }
            }
        }
    }

    fn penalty(&self, l2: f64, g: Option<&mut [f64]>) -> f64 {
        let (h, p) = (self.h, self.p);
        let w1 = 0..h * p;
        let w2 = h * p + h..h * p + 2 * h;
        let mut sq = 0.0;
        for idx in w1.clone().chain(w2.clone()) {
            sq += self.theta[idx] * self.theta[idx];
        }
        if let Some(g) = g {
            for idx in w1.chain(w2) {
                g[idx] += l2 * self.theta[idx];
            }
        }
        0.5 * l2 * sq
    }

    /// Batch loss `(1/b) sum loss_i + (l2/2) ||W||^2` and its gradient.
    fn batch_loss_grad(
        &self,
        views: &[DMatrix<f64>],
        rows: &[usize],
        objective: &dyn Objective,
        l2: f64,
        g: &mut [f64],
        scratch: &mut Scratch,
    ) -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        for (v, xs) in views.iter().enumerate() {
            let (raw, pre) = (&mut scratch.raw[v], &mut scratch.pre[v]);
            self.forward(xs, rows, raw, pre);
            scratch.grad[v].clear();
            scratch.grad[v].resize(rows.len(), 0.0);
        }
        let b = rows.len() as f64;
        let loss = objective.eval(rows, &scratch.raw, &mut scratch.grad) / b;
        for (v, xs) in views.iter().enumerate() {
            scratch.grad[v].iter_mut().for_each(|d| *d /= b);
            self.backward(xs, rows, &scratch.pre[v], &scratch.grad[v], g);
        }
        loss + self.penalty(l2, Some(g))
    }

    /// Untrained network standardized on `x` with He-initialized weights.
    pub fn initialize(x: &DMatrix<f64>, hidden_units: usize, head: Head, output_bias: f64, seed: u64) -> Self {
        Self::new(x, hidden_units.max(1), head, output_bias, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Flat parameter vector `[w1, b1, w2, b2]`.
    pub fn parameters(&self) -> &[f64] {
        &self.theta
    }

    pub fn with_parameters(&self, theta: Vec<f64>) -> Self {
        assert_eq!(theta.len(), self.theta.len(), "parameter length mismatch");
        Self { theta, ..self.clone() }
    }

    /// Mean weighted regression loss over all rows of `x` plus the L2
    /// penalty, with its gradient in parameter order.
    pub fn regression_loss_grad(&self, x: &DMatrix<f64>, y: &[f64], w: &[f64], l2: f64) -> (f64, Vec<f64>) {
        let xs = [self.standardize(x)];
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let objective = RegressionObjective { y, w, head: self.head };
        let mut g = vec![0.0; self.theta.len()];
        let loss = self.batch_loss_grad(&xs, &rows, &objective, l2, &mut g, &mut Scratch::new(1));
        (loss, g)
    }

    /// Raw (pre-head) outputs for unstandardized inputs.
    pub fn raw(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let xs = self.standardize(x);
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let (mut raw, mut pre) = (Vec::new(), Vec::new());
        self.forward(&xs, &rows, &mut raw, &mut pre);
        raw
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let raw = self.raw(x);
        match self.head {
            Head::Identity => raw,
            Head::Logistic => raw.into_iter().map(expit).collect(),
            Head::Softplus => raw.into_iter().map(softplus).collect(),
        }
    }
}

struct Scratch {
    raw: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    grad: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(views: usize) -> Self {
        Self { raw: vec![Vec::new(); views], pre: vec![Vec::new(); views], grad: vec![Vec::new(); views] }
    }
}

/// Trains a network on `views` (each `n x p`, unstandardized; the first view
/// defines the standardization) using units `rows`.
pub(crate) fn train(
    params: &MlpParams,
    views: &[DMatrix<f64>],
    rows: &[usize],
    objective: &dyn Objective,
    head: Head,
    output_bias: f64,
    seed: u64,
) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_x = views[0].select_rows(rows);
    let mut net = Mlp::new(&train_x, params.hidden_units, head, output_bias, &mut rng);
    let std_views: Vec<DMatrix<f64>> = views.iter().map(|x| net.standardize(x)).collect();

    let dim = net.theta.len();
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut step = 0i32;
    let mut order = rows.to_vec();
    let mut scratch = Scratch::new(views.len());
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            net.batch_loss_grad(&std_views, batch, objective, params.l2_penalty, &mut g, &mut scratch);
            step += 1;
            let c1 = 1.0 - beta1.powi(step);
            let c2 = 1.0 - beta2.powi(step);
            for k in 0..dim {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                net.theta[k] -= params.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
    }
    net
}

/// Weighted squared error (identity head) or Bernoulli log-loss (logistic head).
pub(crate) struct RegressionObjective<'a> {
    pub y: &'a [f64],
    pub w: &'a [f64],
    pub head: Head,
}

impl Objective for RegressionObjective<'_> {
    fn eval(&self, rows: &[usize], raw: &[Vec<f64>], grad: &mut [Vec<f64>]) -> f64 {
        let mut loss = 0.0;
        for (k, &i) in rows.iter().enumerate() {
            let z = raw[0][k];
            let (y, w) = (self.y[i], self.w[i]);
            match self.head {
                Head::Logistic => {
                    loss += w * (softplus(z) - y * z);
                    grad[0][k] = w * (expit(z) - y);
                }
                _ => {
                    loss += 0.5 * w * (z - y) * (z - y);
                    grad[0][k] = w * (z - y);
                }
            }
        }
        loss
    }
}
