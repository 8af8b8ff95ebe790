//! Analytic gradients against central differences on a small network, and
//! loss reduction on the committed toy set.

use crate::Check;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use tapbench_core::dataset::{load_dir, usable};
use tapbench_core::policy::train::{denoiser_batch, denoising_loss, tap_loss};
use tapbench_core::policy::{train, Mlp, NoiseSchedule, PolicyConfig, TrainingSet};

const GRAD_TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;
const UPDATES: usize = 2000;
const WINDOW: usize = 50;

fn toy_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/toy"))
}

/// Largest relative error between analytic and central-difference
/// gradients, over parameters whose gradient is not negligible.
fn gradient_error(net: &Mlp, loss: impl Fn(&Mlp) -> (f64, Mlp)) -> (f64, usize) {
    let analytic = loss(net).1.flat();
    let params = net.flat();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] = params[i] + STEP;
        probe.set_flat(&p);
        let up = loss(&probe).0;
        p[i] = params[i] - STEP;
        probe.set_flat(&p);
        let down = loss(&probe).0;
        let numeric = (up - down) / (2.0 * STEP);
        let scale = analytic[i].abs().max(numeric.abs());
        if scale < 1e-7 {
            continue;
        }
        worst = worst.max((analytic[i] - numeric).abs() / scale);
        checked += 1;
    }
    (worst, checked)
}

pub fn check() -> Check {
    let (manifest, demos) = load_dir(toy_dir()).map_err(|e| format!("toy set: {e}"))?;
    let demos = usable(&demos);
    ensure!(demos.len() == 10, "toy set has {} usable episodes", demos.len());
    let task_cfg = &demos[0].task;
    let cfg = PolicyConfig::for_task(manifest.task, task_cfg.library().len(), true);

    // Small networks fed with real denoiser and TAP-head batches.
    let set = TrainingSet::build(&demos, &cfg).map_err(|e| e.to_string())?;
    let schedule = NoiseSchedule::cosine(cfg.denoise_steps_train);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let idx: Vec<usize> = (0..4).map(|_| rng.random_range(0..set.len())).collect();
    let (inputs, targets, _) = denoiser_batch(&set, &cfg, &schedule, &idx, &mut rng);
    let row_w: Vec<f64> = (0..idx.len()).map(|_| rng.random_range(0.5..2.0)).collect();
    let denoiser = Mlp::new(&[cfg.denoiser_input_dim(), 12, 12, cfg.window_dim()], &mut rng);
    let (d_err, d_n) = gradient_error(&denoiser, |n| denoising_loss(n, &inputs, &targets, &row_w));

    let classes = cfg.tap_classes();
    let obs = Array2::from_shape_fn((idx.len(), cfg.obs_dim), |(r, c)| set.obs[[idx[r], c]]);
    let labels = Array2::from_shape_fn((idx.len(), cfg.horizon), |_| rng.random_range(0..classes));
    let class_w: Vec<f64> = (0..classes).map(|_| rng.random_range(0.5..3.0)).collect();
    let head = Mlp::new(&[cfg.obs_dim, 10, cfg.horizon * classes], &mut rng);
    let (h_err, h_n) = gradient_error(&head, |n| tap_loss(n, &obs, &labels, &class_w));
    ensure!(
        d_err < GRAD_TOL && h_err < GRAD_TOL,
        "gradient relative error denoiser {d_err:.2e}, TAP head {h_err:.2e} (tol {GRAD_TOL:e})"
    );

    let mut run = cfg.clone();
    run.updates = UPDATES;
    let out = train(&demos, &run, manifest.task, None, 0).map_err(|e| e.to_string())?;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let first = mean(&out.losses[..WINDOW]);
    let last = mean(&out.losses[UPDATES - WINDOW..]);
    let reduction = 1.0 - last / first;
    ensure!(
        reduction >= 0.5,
        "loss fell only {:.1}% ({first:.4} to {last:.4}) over {UPDATES} updates",
        100.0 * reduction
    );
    Ok(format!(
        "max gradient relative error {:.1e} over {d_n} denoiser and {:.1e} over {h_n} head parameters (tol {GRAD_TOL:e}); loss {first:.4} -> {last:.4} ({:.1}% reduction, mean of first vs last {WINDOW} of {UPDATES} updates)",
        d_err,
        h_err,
        100.0 * reduction
    ))
}
