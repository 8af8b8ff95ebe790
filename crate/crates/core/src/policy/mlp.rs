//! Fully connected network with SiLU hidden activations, hand-written
//! backpropagation and an Adam optimizer.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// Shape (inputs, outputs).
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Uniform init in +-1/sqrt(fan_in).
    pub fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let w = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..bound));
        let b = Array1::from_shape_fn(outputs, |_| rng.random_range(-bound..bound));
        Self { w, b }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Activations kept from the forward pass for backpropagation.
pub struct Cache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl Mlp {
    /// `widths` lists input, hidden and output sizes.
    pub fn new(widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("layers").w.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
        }
    }

    /// Batch forward pass; rows are samples.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.w) + &layer.b;
            if i < last {
                h.mapv_inplace(silu);
            }
        }
        h
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, Cache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.w) + &layer.b;
            inputs.push(h);
            if i < last {
                h = z.mapv(silu);
                pre.push(z);
            } else {
                h = z;
            }
        }
        (h, Cache { inputs, pre })
    }

    /// Gradients of the loss w.r.t. parameters given dL/d(output).
    pub fn backward(&self, cache: &Cache, grad_out: &Array2<f64>) -> Mlp {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            let gw = input.t().dot(&d);
            let gb = d.sum_axis(Axis(0));
            grads.push(Linear { w: gw, b: gb });
            if i > 0 {
                let mut prev = d.dot(&self.layers[i].w.t());
                prev.zip_mut_with(&cache.pre[i - 1], |g, &z| *g *= silu_grad(z));
                d = prev;
            }
        }
        grads.reverse();
        Mlp { layers: grads }
    }

    /// Parameters flattened in layer order (w then b).
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = *it.next().expect("enough parameters");
            }
        }
    }

    /// `self = decay * self + (1 - decay) * other`.
    pub fn ema_update(&mut self, other: &Mlp, decay: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.zip_mut_with(&b.w, |x, &y| *x = decay * *x + (1.0 - decay) * y);
            a.b.zip_mut_with(&b.b, |x, &y| *x = decay * *x + (1.0 - decay) * y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    m: Mlp,
    v: Mlp,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(like: &Mlp) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let step = lr * c2.sqrt() / c1;
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            update(
                p.w.as_slice_mut().unwrap(),
                g.w.as_slice().unwrap(),
                m.w.as_slice_mut().unwrap(),
                v.w.as_slice_mut().unwrap(),
                b1,
                b2,
                eps,
                step,
            );
            update(
                p.b.as_slice_mut().unwrap(),
                g.b.as_slice().unwrap(),
                m.b.as_slice_mut().unwrap(),
                v.b.as_slice_mut().unwrap(),
                b1,
                b2,
                eps,
                step,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], b1: f64, b2: f64, eps: f64, step: f64) {
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] -= step * m[i] / (v[i].sqrt() + eps);
    }
}
