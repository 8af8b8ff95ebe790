//! Paired-seed comparison of policies: every policy runs the same initial
//! conditions, each repeated with different inference noise.

pub mod summary;
pub mod support;

pub use summary::{summarize, Comparison, ComparisonRow, REFERENCE_RATES};
pub use support::TriggerRegion;

use crate::error::{Error, Result};
use crate::policy::PolicyWeights;
use crate::runtime::{run_episode, ClockMode, EpisodeResult, Policy, RuntimeConfig};
use crate::sim::{FailureReason, TaskConfig, TaskKind, WorldState, LID};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPolicy {
    pub name: String,
    pub weights: PathBuf,
}

/// Plan file contents (TOML). Relative paths resolve against the working
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub task: TaskKind,
    /// Task config file; the embedded default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    #[serde(default = "default_conditions")]
    pub num_initial_conditions: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub shared_seed_base: u64,
    pub policies: Vec<PlanPolicy>,
}

fn default_conditions() -> usize {
    7
}

fn default_repeats() -> usize {
    3
}

impl ExperimentPlan {
    pub fn new(task: TaskKind, policies: Vec<PlanPolicy>) -> Self {
        Self {
            task,
            config: None,
            num_initial_conditions: default_conditions(),
            repeats: default_repeats(),
            shared_seed_base: 0,
            policies,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::Config(format!("plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_initial_conditions == 0 || self.repeats == 0 {
            return Err(Error::Config(
                "plan: need at least one initial condition and one repeat".into(),
            ));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("plan: no policies".into()));
        }
        let mut names: Vec<&str> = self.policies.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("plan: duplicate policy name".into()));
        }
        Ok(())
    }

    pub fn task_config(&self) -> Result<TaskConfig> {
        let cfg = match &self.config {
            Some(path) => TaskConfig::load(path)?,
            None => self.task.default_config(),
        };
        if cfg.task != self.task {
            return Err(Error::Config(format!(
                "plan task {} but config is for {}",
                self.task, cfg.task
            )));
        }
        Ok(cfg)
    }

    /// Environment seeds shared by every policy.
    pub fn env_seeds(&self) -> Vec<u64> {
        (0..self.num_initial_conditions as u64)
            .map(|i| self.shared_seed_base + i)
            .collect()
    }
}

/// A policy under evaluation.
pub struct Contender<'a> {
    pub name: String,
    /// Whether it can trigger TAPs.
    pub hybrid: bool,
    pub policy: &'a dyn Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub tick: u64,
    pub tap: usize,
    pub name: String,
    pub accepted: bool,
    pub ee_position: [f64; 3],
    pub gripper: f64,
    /// EE position relative to the task's reference object, if it has one.
    pub offset: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub policy: String,
    pub env_seed: u64,
    pub repeat: usize,
    pub success: bool,
    pub failure: Option<FailureReason>,
    pub ticks: u64,
    pub triggers: Vec<TriggerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub name: String,
    pub hybrid: bool,
    pub rollouts: usize,
    pub successes: usize,
    pub failures: BTreeMap<FailureReason, usize>,
}

impl PolicySummary {
    pub fn rate(&self) -> f64 {
        if self.rollouts == 0 {
            0.0
        } else {
            self.successes as f64 / self.rollouts as f64
        }
    }

    pub fn failure_count(&self, reason: FailureReason) -> usize {
        self.failures.get(&reason).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: TaskKind,
    pub num_initial_conditions: usize,
    pub repeats: usize,
    pub shared_seed_base: u64,
    pub policies: Vec<PolicySummary>,
    /// Ordered by (policy, env seed, repeat).
    pub rollouts: Vec<RolloutRecord>,
}

impl ExperimentReport {
    pub fn policy(&self, name: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.name == name)
    }

    /// First policy with (or without) a TAP head.
    pub fn by_kind(&self, hybrid: bool) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.hybrid == hybrid)
    }

    pub fn rollouts_of<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a RolloutRecord> + 'a {
        self.rollouts.iter().filter(move |r| r.policy == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "task {}: {} initial conditions x {} repeats (seeds from {})",
            self.task, self.num_initial_conditions, self.repeats, self.shared_seed_base
        );
        let _ = writeln!(
            s,
            "{:<16} {:>6} {:>9} {:>7}  failures",
            "policy", "kind", "success", "rate"
        );
        for p in &self.policies {
            let failures: Vec<String> = p.failures.iter().map(|(r, n)| format!("{}={n}", r.as_str())).collect();
            let _ = writeln!(
                s,
                "{:<16} {:>6} {:>5}/{:<3} {:>6.1}%  {}",
                p.name,
                if p.hybrid { "HD" } else { "D" },
                p.successes,
                p.rollouts,
                100.0 * p.rate(),
                if failures.is_empty() {
                    "-".to_string()
                } else {
                    failures.join(" ")
                }
            );
        }
        s
    }

    /// One line per rollout, comma separated with a header row.
    pub fn rollouts_csv(&self) -> String {
        let mut s = String::from("policy,env_seed,repeat,success,failure,ticks,triggers\n");
        for r in &self.rollouts {
            let taps: Vec<String> = r
                .triggers
                .iter()
                .filter(|t| t.accepted)
                .map(|t| format!("{}@{}", t.tap, t.tick))
                .collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.policy,
                r.env_seed,
                r.repeat,
                r.success as u8,
                r.failure.map_or("", |f| f.as_str()),
                r.ticks,
                taps.join(" ")
            );
        }
        s
    }
}

/// Position of the object TAP triggers are judged against.
pub fn reference_position(task: TaskKind, ws: &WorldState) -> Option<crate::geometry::Vec3> {
    match task {
        TaskKind::Unscrew => ws.object(LID).map(|o| o.pose.position),
        _ => None,
    }
}

fn rollout_record(name: &str, repeat: usize, r: &EpisodeResult) -> RolloutRecord {
    let triggers = r
        .tap_events
        .iter()
        .map(|e| {
            let p = e.world.ee_pose.position;
            TriggerRecord {
                tick: e.tick,
                tap: e.tap,
                name: e.name.clone(),
                accepted: e.accepted(),
                ee_position: [p.x, p.y, p.z],
                gripper: e.world.gripper,
                offset: reference_position(r.task, &e.world).map(|o| {
                    let d = p - o;
                    [d.x, d.y, d.z]
                }),
            }
        })
        .collect();
    RolloutRecord {
        policy: name.to_string(),
        env_seed: r.env_seed,
        repeat,
        success: r.success,
        failure: if r.success {
            None
        } else {
            Some(r.failure.unwrap_or(FailureReason::Timeout))
        },
        ticks: r.ticks,
        triggers,
    }
}

/// Runs every (policy, seed, repeat) rollout. Repeat `r` uses inference
/// seed `r`; the environment seed is the same for every policy. Raw
/// episodes are written to `artifacts` when given.
pub fn run_contenders(
    plan: &ExperimentPlan,
    cfg: &TaskConfig,
    rt: &RuntimeConfig,
    contenders: &[Contender<'_>],
    artifacts: Option<&Path>,
) -> Result<ExperimentReport> {
    plan.validate()?;
    if rt.mode != ClockMode::DeterministicLockstep {
        return Err(Error::Config("experiments run in lockstep mode".into()));
    }
    if cfg.task != plan.task {
        return Err(Error::Config(format!(
            "plan task {} but config is for {}",
            plan.task, cfg.task
        )));
    }
    let seeds = plan.env_seeds();
    let jobs: Vec<(usize, u64, usize)> = (0..contenders.len())
        .flat_map(|c| {
            seeds
                .iter()
                .flat_map(move |&s| (0..plan.repeats).map(move |r| (c, s, r)))
        })
        .collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len());
    let chunk = jobs.len().div_ceil(workers.max(1));
    let results: Vec<Result<EpisodeResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk.max(1))
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&(c, s, r)| run_episode(contenders[c].policy, &cfg.with_seed(s), rt, r as u64))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("rollout worker"))
            .collect()
    });

    if let Some(dir) = artifacts {
        std::fs::create_dir_all(dir)?;
    }
    let mut rollouts = Vec::with_capacity(jobs.len());
    for (&(c, s, r), res) in jobs.iter().zip(results) {
        let res = res?;
        let name = &contenders[c].name;
        if let Some(dir) = artifacts {
            let file = dir.join(format!("{name}_seed{s}_rep{r}.json"));
            std::fs::write(file, serde_json::to_string(&res).expect("episode serializes"))?;
        }
        rollouts.push(rollout_record(name, r, &res));
    }

    let policies = contenders
        .iter()
        .map(|c| {
            let mine: Vec<&RolloutRecord> = rollouts.iter().filter(|r| r.policy == c.name).collect();
            let mut failures = BTreeMap::new();
            for f in mine.iter().filter_map(|r| r.failure) {
                *failures.entry(f).or_insert(0) += 1;
            }
            PolicySummary {
                name: c.name.clone(),
                hybrid: c.hybrid,
                rollouts: mine.len(),
                successes: mine.iter().filter(|r| r.success).count(),
                failures,
            }
        })
        .collect();
    Ok(ExperimentReport {
        task: plan.task,
        num_initial_conditions: plan.num_initial_conditions,
        repeats: plan.repeats,
        shared_seed_base: plan.shared_seed_base,
        policies,
        rollouts,
    })
}

/// Loads every policy in the plan, then runs the experiment. Missing or
/// mismatched weights abort before any rollout.
pub fn run_experiment(plan: &ExperimentPlan, rt: &RuntimeConfig, artifacts: Option<&Path>) -> Result<ExperimentReport> {
    plan.validate()?;
    let cfg = plan.task_config()?;
    for p in &plan.policies {
        if !p.weights.is_file() {
            return Err(Error::MissingWeights {
                policy: p.name.clone(),
                path: p.weights.display().to_string(),
            });
        }
    }
    let weights = plan
        .policies
        .iter()
        .map(|p| {
            let w = PolicyWeights::load(&p.weights)?;
            if w.task != plan.task {
                return Err(Error::Config(format!(
                    "policy `{}` was trained for {}, plan is for {}",
                    p.name, w.task, plan.task
                )));
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    let contenders: Vec<Contender<'_>> = plan
        .policies
        .iter()
        .zip(&weights)
        .map(|(p, w)| Contender {
            name: p.name.clone(),
            hybrid: w.is_hybrid(),
            policy: w,
        })
        .collect();
    run_contenders(plan, &cfg, rt, &contenders, artifacts)
}
