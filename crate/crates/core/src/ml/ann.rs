//! Fully connected feedforward network: sigmoid hidden layers, linear
//! output, RMSE loss, full-batch ADAM and inverted dropout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Regressor, Samples};
use crate::error::{Error, Result};
use crate::seeds::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// `ω ← ω − δ m̂ / (√v̂ + ε)` with bias-corrected moments.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnConfig {
    /// Number of hidden layers.
    pub depth: usize,
    pub width: usize,
    /// Dropout rate `θ` on hidden activations.
    pub dropout: f64,
    pub epochs: usize,
    pub adam: AdamConfig,
}

impl Default for AnnConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            width: 5,
            dropout: 0.0,
            epochs: 10_000,
            adam: AdamConfig::default(),
        }
    }
}

impl AnnConfig {
    pub fn widths(&self, inputs: usize) -> Vec<usize> {
        let mut w = vec![inputs];
        w.extend(std::iter::repeat_n(self.width, self.depth));
        w.push(1);
        w
    }
}

/// Parameters are stored layer by layer, each as an `out × in` weight block
/// followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    widths: Vec<usize>,
    params: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl NeuralNet {
    pub fn zeros(widths: Vec<usize>) -> Self {
        assert!(widths.len() >= 2 && *widths.last().unwrap() == 1);
        let params = vec![0.0; param_count(&widths)];
        Self { widths, params }
    }

    pub fn from_params(widths: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 || *widths.last().unwrap() != 1 || params.len() != param_count(&widths) {
            return Err(Error::Argument("parameter vector does not match layer widths".into()));
        }
        Ok(Self { widths, params })
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn xavier<R: Rng>(widths: Vec<usize>, rng: &mut R) -> Self {
        let mut net = Self::zeros(widths);
        let mut off = 0;
        for l in 0..net.widths.len() - 1 {
            let (fin, fout) = (net.widths[l], net.widths[l + 1]);
            let limit = (6.0 / (fin + fout) as f64).sqrt();
            for k in 0..fin * fout {
                net.params[off + k] = rng.random_range(-limit..=limit);
            }
            off += fout * (fin + 1);
        }
        net
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    /// Sets the output-layer bias.
    pub fn set_output_bias(&mut self, b: f64) {
        let last = self.params.len() - 1;
        self.params[last] = b;
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let mut off = 0;
        let layers = self.widths.len() - 1;
        for l in 0..layers {
            let (fin, fout) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + fin * fout];
            let b = &self.params[off + fin * fout..off + fout * (fin + 1)];
            let mut next = vec![0.0; fout];
            for o in 0..fout {
                let z = b[o] + (0..fin).map(|i| w[o * fin + i] * a[i]).sum::<f64>();
                next[o] = if l + 1 < layers { sigmoid(z) } else { z };
            }
            a = next;
            off += fout * (fin + 1);
        }
        a[0]
    }

    /// RMSE over `samples` and its gradient in `params()` order, dropout off.
    pub fn loss_gradient(&self, samples: &Samples) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = loss_and_grad(self, samples, None, &mut grad);
        (loss, grad)
    }
}

impl Regressor for NeuralNet {
    fn predict(&self, x: &[f64]) -> f64 {
        self.forward(x)
    }
}

/// Multipliers applied to hidden activations: 0 for dropped units,
/// `1 / (1 − θ)` for kept ones. Indexed `[sample][hidden unit]` with hidden
/// units of all layers concatenated.
pub(crate) type DropoutMasks = Vec<Vec<f64>>;

/// RMSE over the batch and its gradient with respect to every parameter.
pub(crate) fn loss_and_grad(
    net: &NeuralNet,
    samples: &Samples,
    masks: Option<&DropoutMasks>,
    grad: &mut [f64],
) -> f64 {
    let widths = &net.widths;
    let layers = widths.len() - 1;
    let n = samples.len();
    grad.iter_mut().for_each(|g| *g = 0.0);
    // activations per layer (input included) for the current sample
    let mut acts: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut deltas: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut outputs = vec![0.0; n];
    let mut offsets = Vec::with_capacity(layers);
    let mut off = 0;
    for l in 0..layers {
        offsets.push(off);
        off += widths[l + 1] * (widths[l] + 1);
    }
    let forward = |s: usize, acts: &mut Vec<Vec<f64>>| {
        acts[0].copy_from_slice(&samples.x[s]);
        let mut unit = 0;
        for l in 0..layers {
            let (fin, fout) = (widths[l], widths[l + 1]);
            let w = &net.params[offsets[l]..offsets[l] + fin * fout];
            let b = &net.params[offsets[l] + fin * fout..offsets[l] + fout * (fin + 1)];
            let (lo, hi) = acts.split_at_mut(l + 1);
            let input = &lo[l];
            let out = &mut hi[0];
            for o in 0..fout {
                let mut z = b[o];
                for i in 0..fin {
                    z += w[o * fin + i] * input[i];
                }
                out[o] = if l + 1 < layers {
                    let h = sigmoid(z);
                    match masks {
                        Some(m) => h * m[s][unit + o],
                        None => h,
                    }
                } else {
                    z
                };
            }
            if l + 1 < layers {
                unit += fout;
            }
        }
    };
    let mut sse = 0.0;
    for s in 0..n {
        forward(s, &mut acts);
        outputs[s] = acts[layers][0];
        let e = outputs[s] - samples.y[s];
        sse += e * e;
    }
    let loss = (sse / n as f64).sqrt();
    if !loss.is_finite() || loss == 0.0 {
        return loss;
    }
    for s in 0..n {
        forward(s, &mut acts);
        deltas[layers][0] = (outputs[s] - samples.y[s]) / (n as f64 * loss);
        let mut unit_end: usize = widths[1..layers].iter().sum();
        for l in (0..layers).rev() {
            let (fin, fout) = (widths[l], widths[l + 1]);
            let off = offsets[l];
            for o in 0..fout {
                let d = deltas[l + 1][o];
                for i in 0..fin {
                    grad[off + o * fin + i] += d * acts[l][i];
                }
                grad[off + fin * fout + o] += d;
            }
            if l == 0 {
                break;
            }
            // back through the sigmoid of hidden layer l (and its dropout)
            let unit_start = unit_end - fin;
            for i in 0..fin {
                let mut back = 0.0;
                for o in 0..fout {
                    back += net.params[off + o * fin + i] * deltas[l + 1][o];
                }
                let a = acts[l][i];
                let deriv = match masks {
                    Some(m) => {
                        let k = m[s][unit_start + i];
                        if k == 0.0 {
                            0.0
                        } else {
                            // a = k σ(z), so da/dz = k σ (1 − σ) = a (1 − a / k)
                            a * (1.0 - a / k)
                        }
                    }
                    None => a * (1.0 - a),
                };
                deltas[l][i] = back * deriv;
            }
            unit_end = unit_start;
        }
    }
    loss
}

fn draw_masks<R: Rng>(rng: &mut R, n: usize, hidden: usize, rate: f64, out: &mut DropoutMasks) {
    let keep = 1.0 / (1.0 - rate);
    out.resize_with(n, Vec::new);
    for row in out.iter_mut() {
        row.clear();
        row.extend((0..hidden).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }));
    }
}

pub fn fit_ann(samples: &Samples, config: AnnConfig, seed: u64) -> Result<NeuralNet> {
    if samples.is_empty() {
        return Err(Error::Argument("no training samples".into()));
    }
    if !(0.0..1.0).contains(&config.dropout) {
        return Err(Error::Argument(format!("dropout {} outside [0, 1)", config.dropout)));
    }
    if !(1..=3).contains(&config.depth) || config.width == 0 {
        return Err(Error::Argument(format!("unsupported depth {}", config.depth)));
    }
    let mut r = rng(seed);
    let net = NeuralNet::xavier(config.widths(samples.dim()), &mut r);
    train(net, samples, config, &mut r)
}

/// Full-batch ADAM from the given starting point.
pub fn train<R: Rng>(mut net: NeuralNet, samples: &Samples, config: AnnConfig, rng: &mut R) -> Result<NeuralNet> {
    let hidden: usize = net.widths[1..net.widths.len() - 1].iter().sum();
    let mut adam = AdamState::new(net.params.len(), config.adam);
    let mut grad = vec![0.0; net.params.len()];
    let mut masks = DropoutMasks::new();
    for epoch in 1..=config.epochs {
        let loss = if config.dropout > 0.0 {
            draw_masks(rng, samples.len(), hidden, config.dropout, &mut masks);
            loss_and_grad(&net, samples, Some(&masks), &mut grad)
        } else {
            loss_and_grad(&net, samples, None, &mut grad)
        };
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        adam.step(&mut net.params, &grad);
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
    }
    Ok(net)
}
