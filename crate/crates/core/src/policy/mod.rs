//! Conditional denoising policy over action windows, with an optional
//! per-step TAP classifier head.
//!
//! The denoiser is an MLP over (normalized observation, noisy normalized
//! action window, timestep embedding) that predicts the clean window, or
//! the injected noise when configured for epsilon prediction.
//! The TAP head is a separate classifier over the normalized observation
//! producing, for each of the `n` window steps, logits over
//! {Empty, TAP 0, .., TAP K-1}. Without the head the policy is the
//! TAP-free baseline.

pub mod mlp;
pub mod normalize;
pub mod schedule;
pub mod train;

pub use mlp::{Adam, Mlp};
pub use normalize::Normalizer;
pub use schedule::{timestep_embedding, NoiseSchedule};
pub use train::{train, TrainOutcome, TrainingSet};

use crate::action::{Action, ACTION_DIM};
use crate::error::{Error, Result};
use crate::sim::{Observation, TaskKind};
use crate::tap::TapCommand;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Regression target of the denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    /// The injected noise.
    Epsilon,
    /// The clean action window.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Window length n.
    pub horizon: usize,
    pub execute_steps: usize,
    pub denoise_steps_train: usize,
    pub denoise_steps_infer: usize,
    pub hidden: Vec<usize>,
    pub tap_hidden: Vec<usize>,
    pub time_embedding: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub updates: usize,
    pub ema_decay: f64,
    pub prediction: Prediction,
    /// Min-SNR truncation of the per-timestep loss weight; `None` weighs
    /// every timestep equally.
    pub snr_gamma: Option<f64>,
    pub tap_head_enabled: bool,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Library size K.
    pub tap_count: usize,
    /// Minimum class probability for a TAP decision to count.
    pub tap_threshold: f64,
    /// Upper bound on the class weight applied to rare TAP labels.
    pub tap_weight_cap: f64,
    pub seed: u64,
}

impl PolicyConfig {
    pub fn new(obs_dim: usize, tap_count: usize, tap_head_enabled: bool) -> Self {
        Self {
            horizon: 8,
            execute_steps: 3,
            denoise_steps_train: 50,
            denoise_steps_infer: 8,
            hidden: vec![256, 256, 256],
            tap_hidden: vec![128, 128],
            time_embedding: 16,
            learning_rate: 1e-3,
            batch_size: 64,
            updates: 20000,
            ema_decay: 0.999,
            prediction: Prediction::Sample,
            snr_gamma: None,
            tap_head_enabled,
            obs_dim,
            action_dim: ACTION_DIM,
            tap_count,
            tap_threshold: 0.5,
            tap_weight_cap: 10.0,
            seed: 0,
        }
    }

    pub fn for_task(task: TaskKind, tap_count: usize, tap_head_enabled: bool) -> Self {
        Self::new(crate::sim::observation_dim(task), tap_count, tap_head_enabled)
    }

    pub fn window_dim(&self) -> usize {
        self.horizon * self.action_dim
    }

    pub fn denoiser_input_dim(&self) -> usize {
        self.obs_dim + self.window_dim() + self.time_embedding
    }

    /// Classes per step: Empty plus one per TAP.
    pub fn tap_classes(&self) -> usize {
        self.tap_count + 1
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("policy config: {m}")));
        if self.horizon == 0 || self.execute_steps == 0 || self.execute_steps > self.horizon {
            return fail("need 1 <= execute_steps <= horizon");
        }
        if self.denoise_steps_train == 0 || self.denoise_steps_infer == 0 {
            return fail("denoising step counts must be positive");
        }
        if self.action_dim != ACTION_DIM {
            return fail("action dimension must be 7");
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return fail("batch size and learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return fail("ema_decay must lie in [0, 1)");
        }
        if self.snr_gamma.is_some_and(|g| !(g > 0.0)) {
            return fail("snr_gamma must be positive");
        }
        if !self.time_embedding.is_multiple_of(2) {
            return fail("time embedding width must be even");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapPrediction {
    pub command: TapCommand,
    /// Probability of the predicted class.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutput {
    pub actions: Vec<Action>,
    pub tap_decisions: Vec<TapPrediction>,
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"TAPW";
pub const WEIGHTS_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyWeights {
    pub task: TaskKind,
    pub config: PolicyConfig,
    pub obs_norm: Normalizer,
    pub action_norm: Normalizer,
    /// Per action dimension bounds (normalized units) for clean-sample clipping.
    pub clip_min: Vec<f64>,
    pub clip_max: Vec<f64>,
    pub denoiser: Mlp,
    pub tap_head: Option<Mlp>,
}

impl PolicyWeights {
    pub fn is_hybrid(&self) -> bool {
        self.tap_head.is_some()
    }

    pub fn schedule(&self) -> NoiseSchedule {
        NoiseSchedule::cosine(self.config.denoise_steps_train)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        ciborium::into_writer(self, &mut out).expect("weights encode");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..4] != WEIGHTS_MAGIC {
            return Err(Error::Format("not a weights file (bad magic)".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != WEIGHTS_VERSION {
            return Err(Error::Format(format!("unsupported weights version {version}")));
        }
        ciborium::from_reader(&bytes[6..]).map_err(|e| Error::Format(format!("weights payload: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Assembles the denoiser input row.
    fn denoiser_row(&self, obs: &[f64], x: &[f64], t: usize, row: &mut [f64]) {
        let d_o = obs.len();
        let d_x = x.len();
        row[..d_o].copy_from_slice(obs);
        row[d_o..d_o + d_x].copy_from_slice(x);
        row[d_o + d_x..].copy_from_slice(&timestep_embedding(t, self.config.time_embedding));
    }
}

/// Runs the reverse chain from seeded noise and reads the TAP head.
/// Deterministic in (weights, observation, noise seed).
pub fn infer(weights: &PolicyWeights, obs: &Observation, noise_seed: u64) -> PolicyOutput {
    infer_with_threshold(weights, obs, noise_seed, weights.config.tap_threshold)
}

pub fn infer_with_threshold(
    weights: &PolicyWeights,
    obs: &Observation,
    noise_seed: u64,
    threshold: f64,
) -> PolicyOutput {
    let cfg = &weights.config;
    let o = weights.obs_norm.normalize(&obs.to_vec());
    assert_eq!(o.len(), cfg.obs_dim, "observation dimension mismatch");
    let schedule = weights.schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let dim = cfg.window_dim();
    let mut x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut input = Array2::zeros((1, cfg.denoiser_input_dim()));
    let ts = schedule.inference_timesteps(cfg.denoise_steps_infer);
    for w in ts.windows(2) {
        let (t, t_prev) = (w[0], w[1]);
        weights.denoiser_row(&o, &x, t, input.row_mut(0).as_slice_mut().unwrap());
        let out = weights.denoiser.forward(&input);
        for (i, xi) in x.iter_mut().enumerate() {
            let d = i % cfg.action_dim;
            let x0 = match cfg.prediction {
                Prediction::Epsilon => schedule.predict_x0(t, *xi, out[[0, i]]),
                Prediction::Sample => out[[0, i]],
            }
            .clamp(weights.clip_min[d], weights.clip_max[d]);
            *xi = schedule.ddim_step(t, t_prev, *xi, x0);
        }
    }
    let actions = x
        .chunks(cfg.action_dim)
        .map(|c| Action::from_slice(&weights.action_norm.denormalize(c)))
        .collect();

    let tap_decisions = match &weights.tap_head {
        None => vec![
            TapPrediction {
                command: TapCommand::Empty,
                confidence: 1.0,
            };
            cfg.horizon
        ],
        Some(head) => {
            let logits = head.forward(&Array2::from_shape_vec((1, o.len()), o).expect("row"));
            let k = cfg.tap_classes();
            (0..cfg.horizon)
                .map(|step| {
                    let row: Vec<f64> = (0..k).map(|c| logits[[0, step * k + c]]).collect();
                    let probs = softmax(&row);
                    let (best, p) = probs
                        .iter()
                        .copied()
                        .enumerate()
                        .fold(
                            (0, f64::NEG_INFINITY),
                            |acc, (i, p)| if p > acc.1 { (i, p) } else { acc },
                        );
                    let command = if best > 0 && p > threshold {
                        TapCommand::Tap(best - 1)
                    } else {
                        TapCommand::Empty
                    };
                    TapPrediction {
                        command,
                        confidence: if command.is_empty() { probs[0] } else { p },
                    }
                })
                .collect()
        }
    };
    PolicyOutput { actions, tap_decisions }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
