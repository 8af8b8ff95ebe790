//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the verdict lines always print.
//! Criterion numbers given on the command line restrict the run, e.g.
//! `cargo test --test acceptance -- 1 2 5`.

/// Fails the enclosing check with a formatted message.
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

mod controller;
mod dataset;
mod experiment;
mod geometry;
mod levenshtein;
mod routine;
mod sim;
mod trainer;

use std::time::Instant;

/// `Ok` carries the measured figures, `Err` what went wrong.
pub type Check = Result<String, String>;

struct Criterion {
    id: u32,
    title: &'static str,
    run: fn() -> Check,
    /// Wall-clock budget in seconds, when one applies.
    budget: Option<f64>,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "lock projection properties",
        run: geometry::check,
        budget: Some(10.0),
    },
    Criterion {
        id: 2,
        title: "edit distance",
        run: levenshtein::check,
        budget: Some(30.0),
    },
    Criterion {
        id: 3,
        title: "controller conformance",
        run: controller::check,
        budget: None,
    },
    Criterion {
        id: 4,
        title: "routine expansion",
        run: routine::check,
        budget: None,
    },
    Criterion {
        id: 5,
        title: "sim conservation and determinism",
        run: sim::check,
        budget: None,
    },
    Criterion {
        id: 6,
        title: "diffusion trainer",
        run: trainer::check,
        budget: None,
    },
    Criterion {
        id: 7,
        title: "dataset round trip and replay",
        run: dataset::check,
        budget: None,
    },
    Criterion {
        id: 8,
        title: "unscrew: hybrid beats baseline",
        run: experiment::unscrew,
        budget: None,
    },
    Criterion {
        id: 9,
        title: "vial and transfer: no degradation",
        run: experiment::parity,
        budget: None,
    },
    Criterion {
        id: 10,
        title: "routine triggered in the grasp region",
        run: experiment::routine_reliability,
        budget: None,
    },
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in CRITERIA
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let outcome = match (outcome, c.budget) {
            (Ok(detail), Some(b)) if secs > b => Err(format!("{detail}; took {secs:.1} s, budget {b:.0} s")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {:>2} {}: {detail} [{secs:.1} s]", c.id, c.title),
            Err(detail) => {
                println!("FAIL  {:>2} {}: {detail} [{secs:.1} s]", c.id, c.title);
                failed.push(c.id);
            }
        }
    }
    if !failed.is_empty() {
        println!("acceptance failures: {failed:?}");
        std::process::exit(1);
    }
}
