use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use tapbench::bridge::BridgeCore;
use tapbench_core::dataset::{generate_scripted, load_dir, usable};
use tapbench_core::eval::{run_experiment, summarize, ExperimentPlan, ExperimentReport};
use tapbench_core::policy::{train, PolicyConfig, PolicyWeights};
use tapbench_core::runtime::{replay, run_episode, ClockMode, Policy, RuntimeConfig, ScriptedPolicy};
use tapbench_core::sim::{TaskConfig, TaskKind};

#[derive(Parser)]
#[command(
    name = "tapbench",
    version,
    about = "Hybrid denoising policies with teleoperation augmentation primitives"
)]
struct Cli {
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, env = "TAPBENCH_LOG", default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    /// Denoiser plus TAP head.
    Hybrid,
    /// Denoiser only.
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    Lockstep,
    Realtime,
}

#[derive(clap::Args)]
struct TaskArgs {
    /// vial, transfer or unscrew.
    #[arg(long)]
    task: String,
    /// Task config file; the built-in default otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl TaskArgs {
    fn load(&self) -> Result<TaskConfig> {
        let task: TaskKind = self.task.parse()?;
        let cfg = match &self.config {
            Some(p) => TaskConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => task.default_config(),
        };
        if cfg.task != task {
            bail!(
                "config {} is for {}, not {task}",
                self.config.as_deref().unwrap_or(Path::new("")).display(),
                cfg.task
            );
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted-expert demonstrations.
    DemoScripted {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// First environment seed; episode i uses seed + i.
        #[arg(long, default_value_t = 1000)]
        seed: u64,
        /// Output directory; defaults to <data-dir>/<task>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "TAPBENCH_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
    },
    /// Train a hybrid or baseline policy on a demonstration directory.
    Train {
        #[arg(long, value_enum)]
        variant: Variant,
        /// Demonstration directory (with manifest.json).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        updates: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON-lines training metrics.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        log_every: usize,
    },
    /// Run one episode and print its outcome.
    Rollout {
        #[command(flatten)]
        task: TaskArgs,
        /// Policy weights; the scripted expert when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Environment seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Inference noise seed.
        #[arg(long, default_value_t = 0)]
        policy_seed: u64,
        #[arg(long, value_enum, default_value = "lockstep")]
        clock: Clock,
        /// Write the full episode as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment plan and write its report.
    Experiment {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Also write every episode as JSON.
        #[arg(long)]
        episodes: bool,
    },
    /// Summarize experiment reports into a comparison table.
    Report {
        /// report.json files.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Directory for summary.txt and summary.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay recorded demonstrations and check their outcomes.
    Replay {
        #[arg(long)]
        data: PathBuf,
    },
    /// Serve the operator bridge.
    Serve {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, env = "TAPBENCH_BIND", default_value = "127.0.0.1:8765")]
        bind: String,
        /// Weights for policy mode.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, env = "TAPBENCH_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    match cli.command {
        Command::DemoScripted {
            task,
            episodes,
            seed,
            out,
            data_dir,
        } => {
            let cfg = task.load()?;
            let dir = out.unwrap_or_else(|| data_dir.join(cfg.task.short_name()));
            let manifest = generate_scripted(&cfg, &dir, episodes, seed)?;
            println!(
                "{} episodes ({} successful) written to {}",
                manifest.episodes.len(),
                manifest.success_count(),
                dir.display()
            );
        }
        Command::Train {
            variant,
            data,
            out,
            updates,
            seed,
            metrics,
            log_every,
        } => {
            let (manifest, demos) = load_dir(&data).with_context(|| format!("loading {}", data.display()))?;
            let demos = usable(&demos);
            if demos.is_empty() {
                bail!("no complete successful demonstrations in {}", data.display());
            }
            let task_cfg = &demos[0].task;
            let mut cfg = PolicyConfig::for_task(
                manifest.task,
                task_cfg.library().len(),
                matches!(variant, Variant::Hybrid),
            );
            cfg.seed = seed;
            if let Some(u) = updates {
                cfg.updates = u;
            }
            let mut sink = metrics.map(fs::File::create).transpose()?;
            log::info!("training on {} demonstrations for {} updates", demos.len(), cfg.updates);
            let outcome = train(
                &demos,
                &cfg,
                manifest.task,
                sink.as_mut().map(|f| f as &mut dyn Write),
                log_every,
            )?;
            outcome.weights.save(&out)?;
            let tail = &outcome.losses[outcome.losses.len().saturating_sub(100)..];
            println!(
                "saved {} (final loss {:.5})",
                out.display(),
                tail.iter().sum::<f64>() / tail.len().max(1) as f64
            );
        }
        Command::Rollout {
            task,
            weights,
            seed,
            policy_seed,
            clock,
            out,
        } => {
            let cfg = task.load()?.with_seed(seed);
            let loaded = weights.as_deref().map(PolicyWeights::load).transpose()?;
            let scripted = ScriptedPolicy {
                cfg: cfg.clone(),
                noise_seed: seed,
                horizon: 8,
            };
            let policy: &dyn Policy = match &loaded {
                Some(w) => {
                    if w.task != cfg.task {
                        bail!("weights were trained for {}, not {}", w.task, cfg.task);
                    }
                    w
                }
                None => &scripted,
            };
            let rt = RuntimeConfig {
                control_period: cfg.control_period,
                mode: match clock {
                    Clock::Lockstep => ClockMode::DeterministicLockstep,
                    Clock::Realtime => ClockMode::RealtimeWallClock,
                },
                ..Default::default()
            };
            let r = run_episode(policy, &cfg, &rt, policy_seed)?;
            let taps: Vec<String> = r
                .accepted_triggers()
                .map(|e| format!("{}@{}", e.name, e.tick))
                .collect();
            println!(
                "{} seed {seed}: {} after {} ticks; TAPs: {}",
                cfg.task,
                if r.success {
                    "success".to_string()
                } else {
                    format!("failure ({})", r.failure_reason().unwrap_or("none"))
                },
                r.ticks,
                if taps.is_empty() {
                    "none".into()
                } else {
                    taps.join(", ")
                }
            );
            if let Some(path) = out {
                fs::write(&path, serde_json::to_string(&r)?)?;
            }
        }
        Command::Experiment { plan, out, episodes } => {
            let plan = ExperimentPlan::load(&plan).with_context(|| format!("loading plan {}", plan.display()))?;
            let cfg = plan.task_config()?;
            let rt = RuntimeConfig {
                control_period: cfg.control_period,
                ..Default::default()
            };
            let artifacts = out.join("episodes");
            let report = run_experiment(&plan, &rt, episodes.then_some(artifacts.as_path()))?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("report.json"), report.to_json())?;
            fs::write(out.join("report.txt"), report.render_text())?;
            fs::write(out.join("rollouts.csv"), report.rollouts_csv())?;
            print!("{}", report.render_text());
        }
        Command::Report { reports, out } => {
            let reports = reports
                .iter()
                .map(|p| {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    Ok(ExperimentReport::from_json(&text)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let c = summarize(&reports);
            print!("{}", c.render_text());
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("summary.txt"), c.render_text())?;
                fs::write(dir.join("summary.csv"), c.to_csv())?;
            }
        }
        Command::Replay { data } => {
            let (manifest, demos) = load_dir(&data).with_context(|| format!("loading {}", data.display()))?;
            let mut mismatches = 0;
            for (entry, demo) in manifest.episodes.iter().zip(&demos) {
                let r = replay(demo, &demo.task)?;
                if r.success != demo.success() {
                    mismatches += 1;
                    println!(
                        "{}: recorded success {} but replay gives {}",
                        entry.file,
                        demo.success(),
                        r.success
                    );
                }
            }
            let n = demos.len();
            println!("{}/{n} replays match their recorded outcome", n - mismatches);
            if mismatches > 0 {
                bail!("{mismatches} replays diverged");
            }
        }
        Command::Serve {
            task,
            bind,
            weights,
            data_dir,
            seed,
        } => {
            let cfg = task.load()?;
            let weights = weights.as_deref().map(PolicyWeights::load).transpose()?;
            let core = BridgeCore::new(cfg, weights, Some(data_dir), seed)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&bind)
                    .await
                    .with_context(|| format!("binding {bind}"))?;
                log::info!("bridge listening on ws://{}", listener.local_addr()?);
                tapbench::server::serve(listener, core).await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
    }
    Ok(())
}
