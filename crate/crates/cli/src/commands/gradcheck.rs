//! `gradcheck`: run the finite-difference oracle suite over every autodiff
//! operation and the end-to-end model gradient.

use diffpool_core::gradcheck;

use crate::args::Args;
use crate::exit::{CliError, Result};

pub fn run(args: &Args) -> Result<()> {
    let seed: u64 = match args.get("seed") {
        Some(s) => s
            .parse()
            .map_err(|_| CliError::BadConfig(format!("bad seed {s:?}")))?,
        None => 2024,
    };
    let inject_fault = args.has_flag("inject_fault");

    let report = gradcheck::run_full(seed, inject_fault).map_err(CliError::from)?;
    for entry in &report.entries {
        println!(
            "op={} max_rel_err={:.6e} tolerance={:.0e} status={}",
            entry.name,
            entry.max_rel_err,
            entry.tolerance,
            if entry.passed() { "pass" } else { "fail" }
        );
    }
    if report.all_passed() {
        Ok(())
    } else {
        let failing: Vec<&str> = report.failures().map(|e| e.name.as_str()).collect();
        Err(CliError::GradCheck(format!(
            "gradient check failed for: {}",
            failing.join(", ")
        )))
    }
}
