//! Cross-task comparison of hybrid (HD) and baseline (D) success rates.

use super::ExperimentReport;
use crate::sim::{FailureReason, TaskKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Real-robot success rates (HD, D) reported for the same three tasks.
/// Shown next to simulated rates for orientation only.
pub const REFERENCE_RATES: [(TaskKind, f64, f64); 3] = [
    (TaskKind::VialAspiration, 0.62, 0.57),
    (TaskKind::LiquidTransfer, 0.71, 0.62),
    (TaskKind::Unscrew, 0.67, 0.38),
];

pub fn reference_rates(task: TaskKind) -> Option<(f64, f64)> {
    REFERENCE_RATES.iter().find(|r| r.0 == task).map(|r| (r.1, r.2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub task: TaskKind,
    pub rollouts: usize,
    pub hybrid_successes: Option<usize>,
    pub baseline_successes: Option<usize>,
    pub hybrid_rate: Option<f64>,
    pub baseline_rate: Option<f64>,
    pub reference: Option<(f64, f64)>,
    /// Failure counts by reason, for each policy kind.
    pub hybrid_failures: BTreeMap<FailureReason, usize>,
    pub baseline_failures: BTreeMap<FailureReason, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// One row per report, ordered by task.
pub fn summarize(reports: &[ExperimentReport]) -> Comparison {
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| {
            let hd = r.by_kind(true);
            let d = r.by_kind(false);
            ComparisonRow {
                task: r.task,
                rollouts: r.num_initial_conditions * r.repeats,
                hybrid_successes: hd.map(|p| p.successes),
                baseline_successes: d.map(|p| p.successes),
                hybrid_rate: hd.map(|p| p.rate()),
                baseline_rate: d.map(|p| p.rate()),
                reference: reference_rates(r.task),
                hybrid_failures: hd.map(|p| p.failures.clone()).unwrap_or_default(),
                baseline_failures: d.map(|p| p.failures.clone()).unwrap_or_default(),
            }
        })
        .collect();
    rows.sort_by_key(|r| r.task);
    Comparison { rows }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.0}%", 100.0 * v))
}

fn count(v: Option<usize>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

impl Comparison {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>10} {:>10} {:>14}",
            "task", "rollouts", "HD", "D", "robot HD/D"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>10} {:>10} {:>14}",
                r.task.short_name(),
                r.rollouts,
                format!("{} {}", count(r.hybrid_successes), pct(r.hybrid_rate)),
                format!("{} {}", count(r.baseline_successes), pct(r.baseline_rate)),
                r.reference
                    .map_or_else(|| "-".into(), |(h, d)| format!("{}/{}", pct(Some(h)), pct(Some(d)))),
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<10} {:<4} {:>13} {:>8}",
            "task", "kind", "lifted_early", "timeout"
        );
        for r in &self.rows {
            for (kind, f) in [("HD", &r.hybrid_failures), ("D", &r.baseline_failures)] {
                let get = |k| f.get(&k).copied().unwrap_or(0);
                let _ = writeln!(
                    s,
                    "{:<10} {:<4} {:>13} {:>8}",
                    r.task.short_name(),
                    kind,
                    get(FailureReason::LiftedEarly),
                    get(FailureReason::Timeout)
                );
            }
        }
        s
    }

    /// Figure data: one line per (task, kind), comma separated.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("task,kind,successes,rollouts,rate,robot_rate,lifted_early,timeout\n");
        for r in &self.rows {
            let kinds = [
                (
                    "HD",
                    r.hybrid_successes,
                    r.hybrid_rate,
                    r.reference.map(|x| x.0),
                    &r.hybrid_failures,
                ),
                (
                    "D",
                    r.baseline_successes,
                    r.baseline_rate,
                    r.reference.map(|x| x.1),
                    &r.baseline_failures,
                ),
            ];
            for (kind, n, rate, robot, f) in kinds {
                let Some(n) = n else { continue };
                let get = |k| f.get(&k).copied().unwrap_or(0);
                let _ = writeln!(
                    s,
                    "{},{kind},{n},{},{:.4},{},{},{}",
                    r.task.short_name(),
                    r.rollouts,
                    rate.unwrap_or(0.0),
                    robot.map_or_else(String::new, |v| format!("{v:.2}")),
                    get(FailureReason::LiftedEarly),
                    get(FailureReason::Timeout)
                );
            }
        }
        s
    }
}
