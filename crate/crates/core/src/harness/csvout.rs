//! CSV emission. One fixed schema for both per-round run logs and sweep
//! summary tables:
//!
//! `setting,algo,seed,d,k,K,T,N,round,regret_total,regret_per_task`
//!
//! Run logs carry one row per logged round (every round for `N ≤ 10⁴`, else
//! every `⌈N/10⁴⌉`-th round plus the final one); summary tables carry one
//! final-round row per run. Reals are printed with 10 significant digits.

use super::ledger::{RegretLedger, RunSummary};
use crate::error::{Error, Result};
use std::fs;
use std::io::Write as _;
use std::path::Path;

pub const CSV_HEADER: &str = "setting,algo,seed,d,k,K,T,N,round,regret_total,regret_per_task";
const MAX_LOGGED_ROUNDS: usize = 10_000;

/// Plain decimal with `sig` significant digits (no scientific notation).
pub fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (sig as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Identity of one run for row rendering.
#[derive(Debug, Clone)]
pub struct RowMeta {
    pub setting: String,
    pub algo: String,
    pub seed: u64,
    pub dim: usize,
    pub rank: usize,
    /// 0 when the setting has no fixed action count (infinite).
    pub num_actions: usize,
    pub num_tasks: usize,
    pub horizon: usize,
}

impl RowMeta {
    pub fn from_summary(s: &RunSummary) -> RowMeta {
        RowMeta {
            setting: s.setting.clone(),
            algo: s.algo.clone(),
            seed: s.seed,
            dim: s.dim,
            rank: s.rank,
            num_actions: s.num_actions,
            num_tasks: s.num_tasks,
            horizon: s.horizon,
        }
    }
}

fn render_row(meta: &RowMeta, round: usize, total: f64, per_task: f64) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        meta.setting,
        meta.algo,
        meta.seed,
        meta.dim,
        meta.rank,
        meta.num_actions,
        meta.num_tasks,
        meta.horizon,
        round,
        format_sig(total, 10),
        format_sig(per_task, 10),
    )
}

/// Stride of the round log: 1 up to 10⁴ rounds, `⌈N/10⁴⌉` beyond.
pub fn log_stride(horizon: usize) -> usize {
    horizon.div_ceil(MAX_LOGGED_ROUNDS).max(1)
}

/// Render the per-round log of one run.
pub fn render_run_csv(meta: &RowMeta, ledger: &RegretLedger) -> String {
    let n = ledger.rounds();
    let stride = log_stride(n);
    let mut out = String::with_capacity(64 * (n / stride + 2));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for round in 1..=n {
        if round % stride == 0 || round == n {
            out.push_str(&render_row(
                meta,
                round,
                ledger.cumulative_at(round),
                ledger.per_task_at(round),
            ));
            out.push('\n');
        }
    }
    out
}

/// Render a sweep summary: one final-round row per run.
pub fn render_summary_csv(rows: &[RunSummary]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in rows {
        let meta = RowMeta::from_summary(s);
        out.push_str(&render_row(
            &meta,
            s.horizon,
            s.final_regret_total,
            s.final_regret_per_task,
        ));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(path.display().to_string(), e))?;
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// FNV-1a over the canonical sweep description; used for content-addressed
/// output names so identical sweeps map to identical files.
pub fn content_address(canonical: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.0, 10), "0");
        assert_eq!(format_sig(0.5, 10), "0.5000000000");
        assert_eq!(format_sig(3162.0, 10), "3162.000000");
        assert_eq!(format_sig(-2.5, 10), "-2.500000000");
        assert_eq!(format_sig(123.456789123, 10), "123.4567891");
    }

    #[test]
    fn one_round_run_renders_two_lines() {
        let mut ledger = RegretLedger::new(4);
        ledger.push_round(&[1.0, 0.5, 0.0, 0.5]).unwrap();
        let meta = RowMeta {
            setting: "infinite".into(),
            algo: "pege".into(),
            seed: 7,
            dim: 3,
            rank: 1,
            num_actions: 0,
            num_tasks: 4,
            horizon: 1,
        };
        let text = render_run_csv(&meta, &ledger);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(
            lines[1],
            "infinite,pege,7,3,1,0,4,1,1,2.000000000,0.5000000000"
        );
    }

    #[test]
    fn per_task_column_is_total_over_tasks() {
        let mut ledger = RegretLedger::new(8);
        let mut lcg = 1234567_u64;
        for _ in 0..100 {
            let regs: Vec<f64> = (0..8)
                .map(|_| {
                    lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1);
                    (lcg >> 40) as f64 / (1u64 << 24) as f64
                })
                .collect();
            ledger.push_round(&regs).unwrap();
        }
        let meta = RowMeta {
            setting: "finite".into(),
            algo: "mlin_greedy".into(),
            seed: 1,
            dim: 5,
            rank: 2,
            num_actions: 5,
            num_tasks: 8,
            horizon: 100,
        };
        let text = render_run_csv(&meta, &ledger);
        let mut prev_round = 0usize;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 11);
            let round: usize = cols[8].parse().unwrap();
            assert!(round > prev_round, "round column must strictly increase");
            prev_round = round;
            let total: f64 = cols[9].parse().unwrap();
            let per_task: f64 = cols[10].parse().unwrap();
            // The ledger relation per_task = total/T is exact; parsed values
            // carry the 10-significant-digit rounding of both columns.
            assert!((per_task - total / 8.0).abs() <= 1e-9 * (1.0 + total));
        }
        assert_eq!(prev_round, 100);
    }

    #[test]
    fn long_runs_are_downsampled_and_keep_the_last_round() {
        let mut ledger = RegretLedger::new(1);
        for _ in 0..25_000 {
            ledger.push_round(&[0.1]).unwrap();
        }
        let stride = log_stride(25_000);
        assert_eq!(stride, 3);
        let meta = RowMeta {
            setting: "finite".into(),
            algo: "independent_greedy".into(),
            seed: 0,
            dim: 2,
            rank: 1,
            num_actions: 2,
            num_tasks: 1,
            horizon: 25_000,
        };
        let text = render_run_csv(&meta, &ledger);
        let lines: Vec<&str> = text.lines().collect();
        let last_cols: Vec<&str> = lines.last().unwrap().split(',').collect();
        assert_eq!(last_cols[8], "25000");
        assert!(lines.len() <= 2 + 25_000 / 3 + 1);
    }

    #[test]
    fn content_address_is_stable_and_input_sensitive() {
        let a = content_address("sweep v1");
        assert_eq!(a, content_address("sweep v1"));
        assert_ne!(a, content_address("sweep v2"));
        assert_eq!(a.len(), 16);
    }
}
