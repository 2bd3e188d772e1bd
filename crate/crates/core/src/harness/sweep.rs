//! Cross-product sweeps over task counts and ranks, treatment vs baseline,
//! with per-cell failure isolation and content-addressed output naming.

use super::config::{Algo, ExperimentConfig, Setting};
use super::csvout::content_address;
use super::ledger::RunSummary;
use super::runner::run;
use rayon::prelude::*;

/// One sweep coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepCell {
    pub num_tasks: usize,
    pub rank: usize,
    pub algo: Algo,
    pub seed: u64,
}

/// Successful rows plus isolated per-cell failures.
#[derive(Debug)]
pub struct SweepOutcome {
    pub summaries: Vec<RunSummary>,
    pub failures: Vec<(SweepCell, String)>,
}

/// Treatment/baseline pair for the base setting.
pub fn algo_pair(setting: Setting) -> [Algo; 2] {
    match setting {
        Setting::Finite | Setting::Mnist => [Algo::MlinGreedy, Algo::IndependentGreedy],
        Setting::Infinite => [Algo::E2tc, Algo::Pege],
    }
}

/// Reads `MTLB_THREADS`; 0 or unset means one worker per core.
pub fn configured_threads() -> usize {
    std::env::var("MTLB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0)
}

/// Run the cross product of `(T, k, {treatment, baseline}, seed)` over the
/// base config. Cells that fail are recorded and skipped; the sweep continues.
pub fn sweep(
    base: &ExperimentConfig,
    t_values: &[usize],
    k_values: &[usize],
    seeds: &[u64],
) -> SweepOutcome {
    let mut cells = Vec::new();
    for &algo in &algo_pair(base.setting) {
        for &rank in k_values {
            for &num_tasks in t_values {
                for &seed in seeds {
                    cells.push(SweepCell {
                        num_tasks,
                        rank,
                        algo,
                        seed,
                    });
                }
            }
        }
    }

    let run_cell = |cell: &SweepCell| -> Result<RunSummary, String> {
        let mut config = base.with_algo(cell.algo);
        config.num_tasks = cell.num_tasks;
        config.rank = cell.rank;
        config.seeds = vec![cell.seed];
        config
            .validate()
            .and_then(|()| run(&config, cell.seed))
            .map(|(_, summary)| summary)
            .map_err(|e| e.to_string())
    };

    let results: Vec<(SweepCell, Result<RunSummary, String>)> = {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(configured_threads())
            .build();
        match pool {
            Ok(pool) => pool.install(|| {
                cells
                    .par_iter()
                    .map(|cell| (cell.clone(), run_cell(cell)))
                    .collect()
            }),
            Err(_) => cells
                .iter()
                .map(|cell| (cell.clone(), run_cell(cell)))
                .collect(),
        }
    };

    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for (cell, outcome) in results {
        match outcome {
            Ok(summary) => summaries.push(summary),
            Err(message) => failures.push((cell, message)),
        }
    }
    SweepOutcome {
        summaries,
        failures,
    }
}

/// Content-addressed file name for a sweep: identical (config, grids, seeds)
/// always map to the same name, so re-running appends nothing new.
pub fn sweep_output_name(
    base: &ExperimentConfig,
    t_values: &[usize],
    k_values: &[usize],
    seeds: &[u64],
) -> String {
    let canonical = format!(
        "{}|T={t_values:?}|k={k_values:?}|seeds={seeds:?}",
        base.to_json()
    );
    format!("sweep_{}.csv", content_address(&canonical))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            setting: Setting::Finite,
            dim: 4,
            rank: 2,
            num_actions: Some(3),
            num_tasks: 2,
            horizon: 20,
            algo: Algo::MlinGreedy,
            seeds: vec![0],
            e2tc: None,
            mnist: None,
            out_path: None,
        }
    }

    #[test]
    fn sweep_row_counting() {
        let outcome = sweep(&base(), &[1, 2], &[1, 2], &[7, 8]);
        // 2 T-values × 2 ranks × 2 algos × 2 seeds.
        assert_eq!(outcome.summaries.len() + outcome.failures.len(), 16);
        assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
    }

    #[test]
    fn empty_grid_is_empty_success() {
        let outcome = sweep(&base(), &[], &[1], &[1]);
        assert!(outcome.summaries.is_empty());
        assert!(outcome.failures.is_empty());
    }

    #[test]
    fn failures_are_isolated_per_cell() {
        // rank 5 > d = 4 fails; rank 1 cells still run.
        let outcome = sweep(&base(), &[2], &[1, 5], &[3]);
        assert_eq!(outcome.summaries.len(), 2);
        assert_eq!(outcome.failures.len(), 2);
        for (cell, msg) in &outcome.failures {
            assert_eq!(cell.rank, 5);
            assert!(!msg.is_empty());
        }
    }

    #[test]
    fn output_name_is_content_addressed() {
        let a = sweep_output_name(&base(), &[1, 2], &[1], &[0]);
        let b = sweep_output_name(&base(), &[1, 2], &[1], &[0]);
        assert_eq!(a, b);
        let c = sweep_output_name(&base(), &[1, 3], &[1], &[0]);
        assert_ne!(a, c);
        assert!(a.starts_with("sweep_") && a.ends_with(".csv"));
    }

    #[test]
    fn sweep_is_deterministic() {
        let x = sweep(&base(), &[2], &[1], &[5]);
        let y = sweep(&base(), &[2], &[1], &[5]);
        assert_eq!(x.summaries.len(), y.summaries.len());
        for (a, b) in x.summaries.iter().zip(&y.summaries) {
            assert_eq!(a.final_regret_total, b.final_regret_total);
            assert_eq!(a.algo, b.algo);
        }
    }
}
