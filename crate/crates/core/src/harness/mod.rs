//! Declarative experiment runner: parse a config, construct the instance and
//! policy, drive the round loop, account regret, and emit CSV.

mod config;
mod csvout;
mod ledger;
mod runner;
mod selftest;
mod sweep;

pub use config::{parse_digits, Algo, E2tcParams, ExperimentConfig, MnistConfig, Setting};
pub use csvout::{
    content_address, format_sig, log_stride, render_run_csv, render_summary_csv, write_text,
    RowMeta, CSV_HEADER,
};
pub use ledger::{RegretLedger, RunSummary};
pub use runner::{build_instance, row_meta, run, run_policy_loop, run_seeded};
pub use selftest::{
    als_oracle_suite, estimate_sphere_moment, moment_suite, selftest, sphere_moment_target,
    CheckResult, SelftestReport,
};
pub use sweep::{algo_pair, configured_threads, sweep, sweep_output_name, SweepCell, SweepOutcome};

use crate::error::Result;
use std::path::Path;

/// Render and write the per-round CSV of one run.
pub fn write_run_csv(path: &Path, meta: &RowMeta, ledger: &RegretLedger) -> Result<()> {
    write_text(path, &render_run_csv(meta, ledger))
}

/// Write a sweep summary unless an identical content-addressed file already
/// exists. Returns true when a file was written.
pub fn write_summary_csv_if_absent(path: &Path, rows: &[RunSummary]) -> Result<bool> {
    if path.exists() {
        return Ok(false);
    }
    write_text(path, &render_summary_csv(rows))?;
    Ok(true)
}
