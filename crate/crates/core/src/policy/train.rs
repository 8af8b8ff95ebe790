//! Training both policy variants from demonstrations.

use super::mlp::{Adam, Mlp};
use super::normalize::Normalizer;
use super::schedule::{timestep_embedding, NoiseSchedule};
use super::{softmax, PolicyConfig, PolicyWeights, Prediction};
use crate::error::{Error, Result};
use crate::teleop::Demonstration;
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// Windows cut from demonstrations, already normalized.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub obs: Array2<f64>,
    pub windows: Array2<f64>,
    /// Class per window step: 0 for Empty, `id + 1` for a TAP.
    pub labels: Array2<usize>,
    pub obs_norm: Normalizer,
    pub action_norm: Normalizer,
    pub clip_min: Vec<f64>,
    pub clip_max: Vec<f64>,
}

impl TrainingSet {
    /// One window per frame; windows running past the end of an episode
    /// repeat its last action (TAP labels pad with Empty).
    pub fn build(demos: &[&Demonstration], cfg: &PolicyConfig) -> Result<Self> {
        let frames: usize = demos.iter().map(|d| d.frames.len()).sum();
        if frames == 0 {
            return Err(Error::Usage(
                "training needs at least one non-empty demonstration".into(),
            ));
        }
        let obs_rows: Vec<Vec<f64>> = demos
            .iter()
            .flat_map(|d| d.frames.iter().map(|f| f.observation.to_vec()))
            .collect();
        if let Some(bad) = obs_rows.iter().find(|r| r.len() != cfg.obs_dim) {
            return Err(Error::Usage(format!(
                "observation dimension {} does not match policy ({})",
                bad.len(),
                cfg.obs_dim
            )));
        }
        let action_rows: Vec<[f64; 7]> = demos
            .iter()
            .flat_map(|d| d.frames.iter().map(|f| f.action.to_array()))
            .collect();
        let obs_norm = Normalizer::fit(obs_rows.iter().map(|r| r.as_slice()), cfg.obs_dim);
        let action_norm = Normalizer::fit(action_rows.iter().map(|r| r.as_slice()), cfg.action_dim);

        let n = cfg.horizon;
        let ad = cfg.action_dim;
        let mut obs = Array2::zeros((frames, cfg.obs_dim));
        let mut windows = Array2::zeros((frames, n * ad));
        let mut labels = Array2::zeros((frames, n));
        let mut clip_min = vec![f64::INFINITY; ad];
        let mut clip_max = vec![f64::NEG_INFINITY; ad];
        let mut row = 0;
        for demo in demos {
            let normed: Vec<Vec<f64>> = demo
                .frames
                .iter()
                .map(|f| action_norm.normalize(&f.action.to_array()))
                .collect();
            let classes: Vec<usize> = demo
                .frames
                .iter()
                .map(|f| f.tap_label().id().map_or(0, |id| id + 1))
                .collect();
            for (i, frame) in demo.frames.iter().enumerate() {
                let o = obs_norm.normalize(&frame.observation.to_vec());
                obs.row_mut(row).as_slice_mut().unwrap().copy_from_slice(&o);
                for k in 0..n {
                    let j = (i + k).min(normed.len() - 1);
                    for d in 0..ad {
                        windows[[row, k * ad + d]] = normed[j][d];
                    }
                    labels[[row, k]] = if i + k < classes.len() { classes[i + k] } else { 0 };
                }
                for d in 0..ad {
                    clip_min[d] = clip_min[d].min(normed[i][d]);
                    clip_max[d] = clip_max[d].max(normed[i][d]);
                }
                row += 1;
            }
        }
        if let Some(bad) = labels.iter().find(|&&c| c > cfg.tap_count) {
            return Err(Error::Usage(format!(
                "TAP label {} outside a library of {}",
                bad - 1,
                cfg.tap_count
            )));
        }
        Ok(Self {
            obs,
            windows,
            labels,
            obs_norm,
            action_norm,
            clip_min,
            clip_max,
        })
    }

    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `min(sqrt(N_empty / N_c), cap)` per class; Empty and absent classes get 1.
    pub fn class_weights(&self, classes: usize, cap: f64) -> Vec<f64> {
        let mut counts = vec![0usize; classes];
        for &c in &self.labels {
            counts[c] += 1;
        }
        let empty = counts[0].max(1) as f64;
        counts
            .iter()
            .enumerate()
            .map(|(c, &n)| {
                if c == 0 || n == 0 {
                    1.0
                } else {
                    (empty / n as f64).sqrt().clamp(1.0, cap.max(1.0))
                }
            })
            .collect()
    }
}

/// Mean squared noise-prediction error and its parameter gradient.
pub fn denoising_loss(net: &Mlp, inputs: &Array2<f64>, noise: &Array2<f64>, row_weights: &[f64]) -> (f64, Mlp) {
    let (out, cache) = net.forward_cached(inputs);
    let mut diff = &out - noise;
    let count = diff.len() as f64;
    let mut loss = 0.0;
    for (mut row, &w) in diff.rows_mut().into_iter().zip(row_weights) {
        loss += w * row.iter().map(|v| v * v).sum::<f64>();
        row *= 2.0 * w / count;
    }
    let grads = net.backward(&cache, &diff);
    (loss / count, grads)
}

/// Min-SNR loss weight of timestep `t`; 1 when disabled.
pub fn snr_weight(schedule: &NoiseSchedule, t: usize, gamma: Option<f64>, prediction: Prediction) -> f64 {
    let Some(g) = gamma else { return 1.0 };
    let snr = schedule.snr(t);
    match prediction {
        Prediction::Epsilon => snr.min(g) / snr,
        Prediction::Sample => snr.min(g),
    }
}

/// Class-weighted cross-entropy over every window step, normalized by the
/// total weight, and its parameter gradient.
pub fn tap_loss(head: &Mlp, obs: &Array2<f64>, labels: &Array2<usize>, weights: &[f64]) -> (f64, Mlp) {
    let k = weights.len();
    let (logits, cache) = head.forward_cached(obs);
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total_w = 0.0;
    let mut loss = 0.0;
    for b in 0..logits.nrows() {
        for step in 0..labels.ncols() {
            let y = labels[[b, step]];
            let w = weights[y];
            let row: Vec<f64> = (0..k).map(|c| logits[[b, step * k + c]]).collect();
            let p = softmax(&row);
            loss -= w * p[y].max(1e-300).ln();
            total_w += w;
            for c in 0..k {
                grad[[b, step * k + c]] = w * (p[c] - if c == y { 1.0 } else { 0.0 });
            }
        }
    }
    grad /= total_w;
    let grads = head.backward(&cache, &grad);
    (loss / total_w, grads)
}

/// Batch of denoiser inputs with the noise that was injected.
pub fn denoiser_batch(
    set: &TrainingSet,
    cfg: &PolicyConfig,
    schedule: &NoiseSchedule,
    indices: &[usize],
    rng: &mut ChaCha8Rng,
) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let d_o = cfg.obs_dim;
    let d_x = cfg.window_dim();
    let mut inputs = Array2::zeros((indices.len(), cfg.denoiser_input_dim()));
    let mut noise = Array2::zeros((indices.len(), d_x));
    let mut weights = Vec::with_capacity(indices.len());
    for (r, &i) in indices.iter().enumerate() {
        let t = rng.random_range(1..=schedule.steps());
        weights.push(snr_weight(schedule, t, cfg.snr_gamma, cfg.prediction));
        let a = schedule.alpha_bar[t];
        let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
        let mut row = inputs.row_mut(r);
        for j in 0..d_o {
            row[j] = set.obs[[i, j]];
        }
        for j in 0..d_x {
            let e: f64 = StandardNormal.sample(rng);
            let x0 = set.windows[[i, j]];
            noise[[r, j]] = match cfg.prediction {
                Prediction::Epsilon => e,
                Prediction::Sample => x0,
            };
            row[d_o + j] = sa * x0 + sn * e;
        }
        for (j, v) in timestep_embedding(t, cfg.time_embedding).into_iter().enumerate() {
            row[d_o + d_x + j] = v;
        }
    }
    (inputs, noise, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub update: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tap_loss: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: PolicyWeights,
    /// Denoising loss of every update.
    pub losses: Vec<f64>,
    pub tap_losses: Vec<f64>,
}

fn learning_rate(cfg: &PolicyConfig, update: usize) -> f64 {
    let warmup = 100.min(cfg.updates / 10).max(1);
    let w = ((update + 1) as f64 / warmup as f64).min(1.0);
    let progress = update as f64 / cfg.updates.max(1) as f64;
    cfg.learning_rate * w * (0.05 + 0.95 * 0.5 * (1.0 + (PI * progress).cos()))
}

/// Trains a policy. Metrics are written as JSON lines every `log_every`
/// updates when a sink is given. A non-finite loss aborts training.
pub fn train(
    demos: &[&Demonstration],
    cfg: &PolicyConfig,
    task: crate::sim::TaskKind,
    mut metrics: Option<&mut dyn Write>,
    log_every: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let set = TrainingSet::build(demos, cfg)?;
    let schedule = NoiseSchedule::cosine(cfg.denoise_steps_train);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut widths = vec![cfg.denoiser_input_dim()];
    widths.extend(&cfg.hidden);
    widths.push(cfg.window_dim());
    let mut denoiser = Mlp::new(&widths, &mut rng);
    let mut ema = denoiser.clone();
    let mut opt = Adam::new(&denoiser);

    let mut head = cfg.tap_head_enabled.then(|| {
        let mut w = vec![cfg.obs_dim];
        w.extend(&cfg.tap_hidden);
        w.push(cfg.horizon * cfg.tap_classes());
        Mlp::new(&w, &mut rng)
    });
    let mut head_ema = head.clone();
    let mut head_opt = head.as_ref().map(Adam::new);
    let class_weights = set.class_weights(cfg.tap_classes(), cfg.tap_weight_cap);

    let mut losses = Vec::with_capacity(cfg.updates);
    let mut tap_losses = Vec::new();
    let mut last_finite = f64::NAN;
    for update in 0..cfg.updates {
        let lr = learning_rate(cfg, update);
        let indices: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..set.len())).collect();
        let (inputs, noise, row_weights) = denoiser_batch(&set, cfg, &schedule, &indices, &mut rng);
        let (loss, grads) = denoising_loss(&denoiser, &inputs, &noise, &row_weights);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                update,
                detail: format!("denoising loss {loss}; previous {last_finite}; learning rate {lr:e}"),
            });
        }
        last_finite = loss;
        opt.step(&mut denoiser, &grads, lr);
        // Warm-started averaging so early snapshots are usable.
        let decay = cfg.ema_decay.min((1 + update) as f64 / (10 + update) as f64);
        ema.ema_update(&denoiser, decay);
        losses.push(loss);

        let mut tap_value = None;
        if let (Some(h), Some(o), Some(he)) = (head.as_mut(), head_opt.as_mut(), head_ema.as_mut()) {
            let obs = set.obs.select(Axis(0), &indices);
            let labels = set.labels.select(Axis(0), &indices);
            let (tl, g) = tap_loss(h, &obs, &labels, &class_weights);
            if !tl.is_finite() {
                return Err(Error::Diverged {
                    update,
                    detail: format!("TAP loss {tl}; learning rate {lr:e}"),
                });
            }
            o.step(h, &g, lr);
            he.ema_update(h, decay);
            tap_losses.push(tl);
            tap_value = Some(tl);
        }

        if let Some(sink) = metrics.as_deref_mut() {
            if log_every > 0 && (update % log_every == 0 || update + 1 == cfg.updates) {
                let rec = TrainRecord {
                    update,
                    loss,
                    tap_loss: tap_value,
                    learning_rate: lr,
                };
                writeln!(sink, "{}", serde_json::to_string(&rec).expect("record"))?;
            }
        }
    }
    if !ema.is_finite() {
        return Err(Error::Diverged {
            update: cfg.updates,
            detail: "non-finite weights after training".into(),
        });
    }

    Ok(TrainOutcome {
        weights: PolicyWeights {
            task,
            config: cfg.clone(),
            obs_norm: set.obs_norm.clone(),
            action_norm: set.action_norm.clone(),
            clip_min: set.clip_min.clone(),
            clip_max: set.clip_max.clone(),
            denoiser: ema,
            tap_head: head_ema,
        },
        losses,
        tap_losses,
    })
}
