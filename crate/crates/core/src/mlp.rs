//! Small dense multi-layer perceptrons with hand-written backprop and Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, OodError, Result};
use crate::points::Points;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut StreamRng) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect();
        let bias = (0..outputs).map(|_| rng.random_range(-bound..bound)).collect();
        Self { inputs, outputs, weights, bias, activation }
    }

    fn forward_row(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z = self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            *slot = self.activation.apply(z);
        }
    }
}

/// Training objective evaluated on the network output.
#[derive(Debug, Clone, Copy)]
pub enum Loss<'a> {
    /// `sum((y_hat - y)^2) / (2 * B * D)`.
    Mse { targets: &'a Points },
    /// Sample-weighted binary cross-entropy on a single logit output,
    /// averaged over the batch.
    WeightedBce { labels: &'a [f64], weights: &'a [f64] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Glorot-uniform initialised network with `sizes = [in, h1, ..., out]`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut StreamRng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::glorot(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
    }

    pub fn forward_row(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut next = vec![0.0; l.outputs];
            l.forward_row(&cur, &mut next);
            cur = next;
        }
        cur
    }

    pub fn forward(&self, x: &Points) -> Result<Points> {
        check_dim(self.input_dim(), x.dim())?;
        let mut out = Points::zeros(x.len(), self.output_dim());
        for (i, row) in x.rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.forward_row(row));
        }
        Ok(out)
    }

    /// Loss and its gradient w.r.t. the flattened parameters on the batch
    /// `rows` of `x`. `l2` adds `0.5 * l2 * |W|^2 / B` on the weights.
    pub fn loss_and_gradient(&self, x: &Points, rows: &[usize], loss: Loss<'_>, l2: f64) -> (f64, Vec<f64>) {
        let b = rows.len() as f64;
        let mut grad = vec![0.0; self.n_params()];
        let mut total = 0.0;
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.weights.len() + l.bias.len();
                Some(o)
            })
            .collect();

        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for &r in rows {
            acts.clear();
            acts.push(x.row(r).to_vec());
            for l in &self.layers {
                let mut next = vec![0.0; l.outputs];
                l.forward_row(acts.last().expect("input"), &mut next);
                acts.push(next);
            }
            let out = acts.last().expect("output");
            // delta holds dL/dz for the current layer
            let mut delta = match loss {
                Loss::Mse { targets } => {
                    let t = targets.row(r);
                    let scale = 1.0 / (b * out.len() as f64);
                    let mut d = vec![0.0; out.len()];
                    for j in 0..out.len() {
                        let e = out[j] - t[j];
                        total += 0.5 * e * e * scale;
                        d[j] = e * scale;
                    }
                    d
                }
                Loss::WeightedBce { labels, weights } => {
                    let z = out[0];
                    let y = labels[r];
                    let w = weights[r];
                    total += w * (softplus(z) - y * z) / b;
                    vec![w * (sigmoid(z) - y) / b]
                }
            };
            let last = self.layers.len() - 1;
            // output activation derivative (loss gradients above are w.r.t. the output)
            if let Loss::Mse { .. } = loss {
                let act = self.layers[last].activation;
                for (d, a) in delta.iter_mut().zip(out) {
                    *d *= act.derivative(*a);
                }
            }
            for li in (0..self.layers.len()).rev() {
                let l = &self.layers[li];
                let input = &acts[li];
                let off = offsets[li];
                for o in 0..l.outputs {
                    let g = &mut grad[off + o * l.inputs..off + (o + 1) * l.inputs];
                    for (gi, xi) in g.iter_mut().zip(input) {
                        *gi += delta[o] * xi;
                    }
                    grad[off + l.weights.len() + o] += delta[o];
                }
                if li > 0 {
                    let prev_act = self.layers[li - 1].activation;
                    let mut next = vec![0.0; l.inputs];
                    for o in 0..l.outputs {
                        let w = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                        for (n, wi) in next.iter_mut().zip(w) {
                            *n += delta[o] * wi;
                        }
                    }
                    for (n, a) in next.iter_mut().zip(input) {
                        *n *= prev_act.derivative(*a);
                    }
                    delta = next;
                }
            }
        }
        if l2 > 0.0 {
            for (l, off) in self.layers.iter().zip(&offsets) {
                for (k, w) in l.weights.iter().enumerate() {
                    total += 0.5 * l2 * w * w / b;
                    grad[off + k] += l2 * w / b;
                }
            }
        }
        (total, grad)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Adam optimiser state.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Mini-batch training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without an improvement larger than `tol`.
    pub patience: usize,
    pub tol: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub final_loss: f64,
    pub learning_rate: f64,
    pub restarts: usize,
}

/// Runs mini-batch Adam until the plateau rule or the epoch limit fires.
/// Returns `Err(Diverged)` as soon as the loss stops being finite.
pub fn train(mlp: &mut Mlp, x: &Points, loss: Loss<'_>, cfg: &TrainConfig, rng: &mut StreamRng) -> Result<TrainReport> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut params = mlp.params();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut epochs = 0;
    let mut last = f64::NAN;
    let bs = cfg.batch_size.clamp(1, n.max(1));
    for _ in 0..cfg.max_epochs {
        epochs += 1;
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(bs) {
            let (l, g) = mlp.loss_and_gradient(x, batch, loss, cfg.l2);
            if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(OodError::Diverged(format!("non-finite loss at epoch {epochs}")));
            }
            epoch_loss += l * batch.len() as f64;
            adam.step(&mut params, &g);
            mlp.set_params(&params);
        }
        last = epoch_loss / n as f64;
        if last > best - cfg.tol {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(last);
        if stale >= cfg.patience {
            break;
        }
    }
    Ok(TrainReport { epochs, final_loss: last, learning_rate: cfg.learning_rate, restarts: 0 })
}

/// Re-initialises and retrains with a ten times smaller learning rate on
/// divergence, at most twice.
pub fn train_with_backoff(
    init: impl Fn(&mut StreamRng) -> Mlp,
    x: &Points,
    loss: Loss<'_>,
    cfg: &TrainConfig,
    rng: &mut StreamRng,
) -> Result<(Mlp, TrainReport)> {
    let mut cfg = cfg.clone();
    let mut last_err = None;
    for restart in 0..3 {
        let mut mlp = init(rng);
        match train(&mut mlp, x, loss, &cfg, rng) {
            Ok(mut rep) => {
                rep.restarts = restart;
                return Ok((mlp, rep));
            }
            Err(e @ OodError::Diverged(_)) => {
                last_err = Some(e);
                cfg.learning_rate /= 10.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn sigmoid_is_stable_and_centred() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(-800.0)).abs() < 1e-300 || softplus(-800.0) == 0.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn learns_a_linear_map() {
        let mut rng = substream(1, &["mlp-test"]);
        let x = Points::from_rows(&(0..64).map(|i| [i as f64 / 32.0 - 1.0]).collect::<Vec<_>>()).unwrap();
        let y = x.map_rows(|s, d| d[0] = 0.5 * s[0] + 0.1);
        let cfg =
            TrainConfig { learning_rate: 1e-2, batch_size: 16, max_epochs: 500, patience: 50, tol: 1e-9, l2: 0.0 };
        let (mlp, rep) = train_with_backoff(
            |r| Mlp::new(&[1, 8, 1], Activation::Tanh, Activation::Identity, r),
            &x,
            Loss::Mse { targets: &y },
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert!(rep.final_loss < 1e-4, "loss {}", rep.final_loss);
        assert!((mlp.forward_row(&[0.4])[0] - 0.3).abs() < 0.02);
    }

    #[test]
    fn diverging_runs_report_an_error() {
        let mut rng = substream(2, &["mlp-test"]);
        let x = Points::from_rows(&[[f64::MAX / 4.0], [1.0]]).unwrap();
        let cfg = TrainConfig { learning_rate: 1.0, batch_size: 2, max_epochs: 5, patience: 5, tol: 0.0, l2: 0.0 };
        let res = train_with_backoff(
            |r| Mlp::new(&[1, 2, 1], Activation::Tanh, Activation::Identity, r),
            &x,
            Loss::Mse { targets: &x },
            &cfg,
            &mut rng,
        );
        assert!(matches!(res, Err(OodError::Diverged(_))));
    }
}
