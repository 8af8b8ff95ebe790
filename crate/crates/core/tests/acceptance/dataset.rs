//! Episode files survive a decode/encode cycle byte for byte, and replaying
//! every generated demonstration reproduces its recorded outcome.

use crate::Check;
use std::fs;
use tapbench_core::dataset::{decode, encode, from_json, generate_scripted, load_dir, to_json};
use tapbench_core::runtime::replay;
use tapbench_core::sim::TaskKind;

const EPISODES: usize = 30;

pub fn check() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut total = 0;
    let mut failures_recorded = 0;
    for task in TaskKind::ALL {
        let dir = tmp.path().join(task.short_name());
        generate_scripted(&task.default_config(), &dir, EPISODES, 0).map_err(|e| e.to_string())?;
        let (manifest, demos) = load_dir(&dir).map_err(|e| e.to_string())?;
        ensure!(
            demos.len() == EPISODES,
            "{task}: {} of {EPISODES} episodes loaded",
            demos.len()
        );
        for (entry, demo) in manifest.episodes.iter().zip(&demos) {
            let bytes = fs::read(dir.join(&entry.file)).map_err(|e| e.to_string())?;
            ensure!(
                encode(demo) == bytes,
                "{task} {}: re-encoding differs from the file",
                entry.file
            );
            let back = decode(&bytes).map_err(|e| e.to_string())?;
            ensure!(
                back == *demo && encode(&back) == bytes,
                "{task} {}: decode is not exact",
                entry.file
            );
            let json = from_json(&to_json(demo)).map_err(|e| e.to_string())?;
            ensure!(
                encode(&json) == bytes,
                "{task} {}: JSON round trip is not exact",
                entry.file
            );

            let r = replay(demo, &demo.task).map_err(|e| e.to_string())?;
            ensure!(
                r.success == demo.success() && r.success == entry.success,
                "{task} {}: recorded success {} but replay gives {}",
                entry.file,
                demo.success(),
                r.success
            );
            failures_recorded += usize::from(!demo.success());
            total += 1;
        }
    }
    Ok(format!(
        "{total} episodes round-trip bitwise (binary and JSON); {total}/{total} replays reproduce the recorded success flag ({failures_recorded} recorded failures)"
    ))
}
