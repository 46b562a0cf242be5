use std::path::Path;

use anyhow::Result;

use feedrec_core::trainer;

use crate::config::RunConfig;

pub fn run(config: Option<&Path>, seed: Option<u64>) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let report = trainer::gradcheck(&cfg.training, seed.unwrap_or(0));
    for g in &report.groups {
        println!(
            "{:<22} max rel err {:>9.2e}  ({} coords)",
            g.group, g.max_rel_err, g.coords_checked
        );
    }
    println!(
        "gradcheck {} in {:.2}s (max rel err {:.2e})",
        if report.pass { "PASS" } else { "FAIL" },
        report.elapsed_secs,
        report.max_rel_err
    );
    Ok(if report.pass { 0 } else { 2 })
}
