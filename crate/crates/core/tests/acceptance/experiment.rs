//! Desk-scale comparison of the hybrid policy (HD) against the TAP-free
//! baseline (D) on all three tasks.
//!
//! Per task: 100 scripted demonstrations (seeds 1000..1100) are written and
//! reloaded, both variants train with seed 0 at the default budget, and the
//! plan runs 7 initial conditions x 3 repeats per policy in lockstep.
//! Weights, reports and the summary land in the test target's scratch
//! directory.

use crate::Check;
use std::path::PathBuf;
use std::sync::OnceLock;
use tapbench_core::dataset::{generate_scripted, load_dir, usable};
use tapbench_core::eval::{run_experiment, summarize, ExperimentPlan, ExperimentReport, PlanPolicy, TriggerRegion};
use tapbench_core::policy::{train, PolicyConfig};
use tapbench_core::runtime::RuntimeConfig;
use tapbench_core::sim::{FailureReason, TaskKind};

const DEMOS: usize = 100;
const DEMO_SEED: u64 = 1000;
const GAP: f64 = 0.20;
const PARITY: f64 = 0.15;
const FLOOR: f64 = 0.50;
/// Padding of the demonstrated trigger box, meters.
const REGION_MARGIN: f64 = 0.005;
const ROUTINE: &str = "execute routine unscrew";

struct Outcome {
    report: ExperimentReport,
    region: Option<TriggerRegion>,
}

fn scratch() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn run_task(task: TaskKind) -> Result<Outcome, String> {
    let err = |e: tapbench_core::Error| format!("{task}: {e}");
    let dir = scratch().join(task.short_name());
    let cfg = task.default_config();
    let data = dir.join("demos");
    if data.exists() {
        std::fs::remove_dir_all(&data).map_err(|e| e.to_string())?;
    }
    generate_scripted(&cfg, &data, DEMOS, DEMO_SEED).map_err(err)?;
    let (_, demos) = load_dir(&data).map_err(err)?;
    let demos = usable(&demos);

    let mut policies = Vec::new();
    for (name, hybrid) in [("D", false), ("HD", true)] {
        let pc = PolicyConfig::for_task(task, cfg.library().len(), hybrid);
        let out = train(&demos, &pc, task, None, 0).map_err(err)?;
        let weights = dir.join(format!("{}.tapw", if hybrid { "hybrid" } else { "baseline" }));
        out.weights.save(&weights).map_err(err)?;
        policies.push(PlanPolicy {
            name: name.into(),
            weights,
        });
    }
    let plan = ExperimentPlan::new(task, policies);
    let rt = RuntimeConfig {
        control_period: cfg.control_period,
        ..Default::default()
    };
    let report = run_experiment(&plan, &rt, None).map_err(err)?;
    std::fs::write(dir.join("report.json"), report.to_json()).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("report.txt"), report.render_text()).map_err(|e| e.to_string())?;

    let region = match cfg.library().by_name(ROUTINE) {
        Some(spec) => TriggerRegion::from_demonstrations(&demos, spec.id, REGION_MARGIN).map_err(err)?,
        None => None,
    };
    Ok(Outcome { report, region })
}

fn outcomes() -> &'static Result<Vec<Outcome>, String> {
    static CELL: OnceLock<Result<Vec<Outcome>, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let all = TaskKind::ALL
            .iter()
            .map(|&t| run_task(t))
            .collect::<Result<Vec<_>, _>>()?;
        let reports: Vec<ExperimentReport> = all.iter().map(|o| o.report.clone()).collect();
        let summary = summarize(&reports);
        std::fs::write(scratch().join("summary.txt"), summary.render_text()).map_err(|e| e.to_string())?;
        std::fs::write(scratch().join("summary.csv"), summary.to_csv()).map_err(|e| e.to_string())?;
        print!("{}", summary.render_text());
        Ok(all)
    })
}

fn outcome(task: TaskKind) -> Result<&'static Outcome, String> {
    let all = outcomes().as_ref().map_err(|e| e.clone())?;
    all.iter()
        .find(|o| o.report.task == task)
        .ok_or_else(|| format!("no report for {task}"))
}

fn rates(report: &ExperimentReport) -> Result<(f64, f64), String> {
    let d = report.by_kind(false).ok_or("no baseline in report")?;
    let hd = report.by_kind(true).ok_or("no hybrid in report")?;
    Ok((d.rate(), hd.rate()))
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

pub fn unscrew() -> Check {
    let report = &outcome(TaskKind::Unscrew)?.report;
    let (d, hd) = rates(report)?;
    let base = report.by_kind(false).unwrap();
    let failures = base.rollouts - base.successes;
    let early = base.failure_count(FailureReason::LiftedEarly);
    let detail = format!(
        "HD {} vs D {} (gap {:.1} pts, need >= {}); {early}/{failures} baseline failures lifted early",
        pct(hd),
        pct(d),
        100.0 * (hd - d),
        100.0 * GAP
    );
    ensure!(hd - d >= GAP - 1e-9, "{detail}");
    ensure!(failures > 0 && 2 * early >= failures, "{detail}");
    Ok(detail)
}

pub fn parity() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for task in [TaskKind::VialAspiration, TaskKind::LiquidTransfer] {
        let (d, hd) = rates(&outcome(task)?.report)?;
        ok &= (hd - d).abs() <= PARITY + 1e-9 && d >= FLOOR && hd >= FLOOR;
        parts.push(format!(
            "{task} HD {} D {} (|gap| {:.1} pts)",
            pct(hd),
            pct(d),
            100.0 * (hd - d).abs()
        ));
    }
    let detail = format!(
        "{}; need |gap| <= {} pts and both >= {}",
        parts.join(", "),
        100.0 * PARITY,
        pct(FLOOR)
    );
    ensure!(ok, "{detail}");
    Ok(detail)
}

pub fn routine_reliability() -> Check {
    let o = outcome(TaskKind::Unscrew)?;
    let region = o.region.as_ref().ok_or("demonstrations never triggered the routine")?;
    let hd = o.report.by_kind(true).ok_or("no hybrid in report")?;
    let mut inside = 0;
    let mut removed = 0;
    let mut outside = 0;
    for r in o.report.rollouts_of(&hd.name) {
        let routine: Vec<_> = r
            .triggers
            .iter()
            .filter(|t| t.accepted && t.tap == region.tap)
            .collect();
        if routine.is_empty() {
            continue;
        }
        if routine.iter().any(|t| region.contains(t)) {
            inside += 1;
            removed += usize::from(r.success);
        } else {
            outside += 1;
        }
    }
    let detail = format!(
        "{removed}/{inside} HD rollouts with the routine triggered inside the demonstrated region (from {} demo triggers, {} m margin) removed the lid; {outside} triggered outside",
        region.samples, REGION_MARGIN
    );
    ensure!(inside > 0 && removed == inside, "{detail}");
    Ok(detail)
}
