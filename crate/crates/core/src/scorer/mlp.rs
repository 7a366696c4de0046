//! Dense feed-forward regressor with manual backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *slot = acc;
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => {
                let u = GELU_C * (x + GELU_A * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let u = GELU_C * (x + GELU_A * x * x * x);
                let t = u.tanh();
                let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            }
        }
    }
}

/// Hidden layers use `activation`; the single output unit is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub activation: Activation,
    pub layers: Vec<Dense>,
}

/// Per-sample forward state reused across samples.
pub(crate) struct Workspace {
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
    /// Layer inputs: `acts[0]` is the sample, `acts[l]` feeds layer `l`.
    acts: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers per hidden layer.
    masks: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Mlp {
    /// He-uniform hidden weights, Glorot-uniform output weights, zero biases.
    pub fn init<R: Rng>(input_dim: usize, hidden: &[usize], activation: Activation, rng: &mut R) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let n_layers = sizes.len() - 1;
        let layers = (0..n_layers)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let limit = if l + 1 == n_layers {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let mut d = Dense::zeros(fan_in, fan_out);
                for w in d.weights.iter_mut() {
                    *w = rng.random_range(-limit..limit);
                }
                d
            })
            .collect();
        Self { activation, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "parameter length mismatch");
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
    }

    pub fn output_bias_mut(&mut self) -> &mut f64 {
        &mut self.layers.last_mut().unwrap().bias[0]
    }

    pub(crate) fn workspace(&self) -> Workspace {
        let mut acts = vec![vec![0.0; self.input_dim()]];
        acts.extend(self.layers.iter().map(|l| vec![0.0; l.outputs]));
        let widest = self.layers.iter().map(|l| l.inputs.max(l.outputs)).max().unwrap_or(1);
        Workspace {
            pre: self.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            masks: self.layers.iter().map(|l| vec![1.0; l.outputs]).collect(),
            acts,
            delta: vec![0.0; widest],
            delta_prev: vec![0.0; widest],
        }
    }

    /// Inference forward pass.
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            next.resize(layer.outputs, 0.0);
            layer.forward(&cur, &mut next);
            if l + 1 < self.layers.len() {
                for v in next.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Forward pass that keeps intermediate state for backprop. When
    /// `dropout` is `Some((rate, rng))`, hidden units are dropped with
    /// inverted scaling.
    pub(crate) fn forward_train<R: Rng>(
        &self,
        x: &[f64],
        ws: &mut Workspace,
        mut dropout: Option<(f64, &mut R)>,
    ) -> f64 {
        ws.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let input = &head[l];
            let output = &mut tail[0];
            layer.forward(input, &mut ws.pre[l]);
            if l < last {
                let mask = &mut ws.masks[l];
                match dropout.as_mut() {
                    Some((rate, rng)) if *rate > 0.0 => {
                        let keep = 1.0 - *rate;
                        for m in mask.iter_mut() {
                            *m = if rng.random::<f64>() < *rate { 0.0 } else { 1.0 / keep };
                        }
                    }
                    _ => mask.iter_mut().for_each(|m| *m = 1.0),
                }
                for ((o, p), m) in output.iter_mut().zip(&ws.pre[l]).zip(mask.iter()) {
                    *o = self.activation.apply(*p) * m;
                }
            } else {
                output.copy_from_slice(&ws.pre[l]);
            }
        }
        ws.acts[last + 1][0]
    }

    /// Accumulate `d_out * d(output)/d(params)` into `grad` (flat layout of
    /// [`Mlp::params`]) using the state left by [`Mlp::forward_train`].
    pub(crate) fn backward(&self, d_out: f64, ws: &mut Workspace, grad: &mut [f64]) {
        let offsets = self.offsets();
        let last = self.layers.len() - 1;
        ws.delta[0] = d_out;
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let input = &ws.acts[l];
            let base = offsets[l];
            let (gw, rest) = grad[base..].split_at_mut(layer.weights.len());
            let gb = &mut rest[..layer.outputs];
            for o in 0..layer.outputs {
                let d = ws.delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let prev = &mut ws.delta_prev[..layer.inputs];
            prev.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..layer.outputs {
                let d = ws.delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            let pre = &ws.pre[l - 1];
            let mask = &ws.masks[l - 1];
            for i in 0..layer.inputs {
                prev[i] *= self.activation.derivative(pre[i]) * mask[i];
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }

    fn offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.layers
            .iter()
            .map(|l| {
                let o = at;
                at += l.weights.len() + l.bias.len();
                o
            })
            .collect()
    }

    /// Mean-squared-error loss over a batch and its gradient, without dropout.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_params()];
        let mut ws = self.workspace();
        let n = xs.len() as f64;
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let p = self.forward_train::<rand_chacha::ChaCha8Rng>(x, &mut ws, None);
            let r = p - y;
            loss += r * r / n;
            self.backward(2.0 * r / n, &mut ws, &mut grad);
        }
        (loss, grad)
    }

    /// Mean-squared-error loss without dropout.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        xs.iter()
            .zip(ys)
            .map(|(x, &y)| {
                let r = self.predict_one(x) - y;
                r * r / n
            })
            .sum()
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub(crate) fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
