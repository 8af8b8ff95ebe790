//! Squared-cosine variance schedule and the deterministic (DDIM, eta = 0)
//! sampler used at inference.
//!
//! Timesteps run from 0 (clean data, `alpha_bar = 1`) to `T`. Training draws
//! `t` uniformly from `1..=T`.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    /// `alpha_bar[t]` for `t` in `0..=T`.
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn cosine(steps: usize) -> Self {
        assert!(steps > 0, "schedule needs at least one step");
        let f = |t: usize| {
            let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * FRAC_PI_2;
            x.cos().powi(2)
        };
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for t in 1..=steps {
            let beta = (1.0 - f(t) / f(t - 1)).min(MAX_BETA);
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Self { alpha_bar }
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    /// Signal-to-noise ratio `alpha_bar / (1 - alpha_bar)`.
    pub fn snr(&self, t: usize) -> f64 {
        let a = self.alpha_bar[t];
        a / (1.0 - a)
    }

    /// `x_t = sqrt(ab) x0 + sqrt(1 - ab) eps`.
    pub fn corrupt(&self, t: usize, x0: f64, eps: f64) -> f64 {
        let a = self.alpha_bar[t];
        a.sqrt() * x0 + (1.0 - a).sqrt() * eps
    }

    /// Descending timesteps visited by an `n`-step sampler, ending at 0.
    pub fn inference_timesteps(&self, n: usize) -> Vec<usize> {
        let total = self.steps();
        let n = n.clamp(1, total);
        let mut ts: Vec<usize> = (1..=n).rev().map(|k| (total * k).div_ceil(n)).collect();
        ts.dedup();
        ts.push(0);
        ts
    }

    /// Clean-sample estimate from a noise prediction.
    pub fn predict_x0(&self, t: usize, xt: f64, eps: f64) -> f64 {
        let a = self.alpha_bar[t];
        (xt - (1.0 - a).sqrt() * eps) / a.sqrt()
    }

    /// One deterministic sampler move from `t` to `t_prev` given the
    /// (possibly clipped) clean estimate.
    pub fn ddim_step(&self, t: usize, t_prev: usize, xt: f64, x0: f64) -> f64 {
        let a = self.alpha_bar[t];
        let a_prev = self.alpha_bar[t_prev];
        if t_prev == 0 {
            return x0;
        }
        let eps = (xt - a.sqrt() * x0) / (1.0 - a).sqrt();
        a_prev.sqrt() * x0 + (1.0 - a_prev).sqrt() * eps
    }
}

/// Sinusoidal embedding of a diffusion timestep.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        out.push((t as f64 * freq).sin());
    }
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        out.push((t as f64 * freq).cos());
    }
    out.resize(dim, 0.0);
    out
}
