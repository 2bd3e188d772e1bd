//! Command-line driver: `run` a single config, `sweep` a task/rank grid,
//! `mnist` for pairwise-digit experiments, and `selftest` for the built-in
//! verification suites.
//!
//! Exit codes: 0 success, 2 config error, 3 runtime/numerical failure, 4 I/O.

use clap::{Parser, Subcommand};
use mtlb_core::error::Error;
use mtlb_core::harness::{
    self, parse_digits, render_run_csv, run, selftest, sweep, sweep_output_name,
    write_summary_csv_if_absent, write_text, Algo, ExperimentConfig, MnistConfig, RowMeta, Setting,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mtlb",
    about = "Multi-task linear bandit simulator",
    version,
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config (all its seeds) and write the round log CSV.
    Run {
        /// Path to a JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path (defaults to the config's out_path, then stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-product sweep over task counts and ranks, treatment vs baseline.
    Sweep {
        /// Path to a JSON experiment config used as the base of the grid.
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated task counts, e.g. 5,10,25,50,100.
        #[arg(long)]
        tasks: String,
        /// Comma-separated representation ranks, e.g. 2,4.
        #[arg(long)]
        ranks: String,
        /// Number of seeds (0..n-1 are used).
        #[arg(long)]
        seeds: u64,
        /// Output directory for the content-addressed summary CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise-digit MNIST run from IDX files.
    Mnist {
        /// IDX image file (magic 0x00000803).
        #[arg(long)]
        images: PathBuf,
        /// IDX label file (magic 0x00000801).
        #[arg(long)]
        labels: PathBuf,
        /// Optional test-split IDX image file, merged into the pools.
        #[arg(long)]
        test_images: Option<PathBuf>,
        /// Optional test-split IDX label file, merged into the pools.
        #[arg(long)]
        test_labels: Option<PathBuf>,
        /// Digit selection, e.g. 0-4, 0-9, or 3,7.
        #[arg(long)]
        digits: String,
        /// mlin_greedy or independent_greedy.
        #[arg(long)]
        algo: String,
        /// Representation rank for the factored fit.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Rounds per task.
        #[arg(long, default_value_t = 2000)]
        rounds: usize,
        /// Run seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional projection of pixels to this many leading directions.
        #[arg(long)]
        pca: Option<usize>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in moment Monte-Carlo and fit-vs-oracle suites.
    Selftest,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Unsupported(_) => 2,
        Error::NumericalFailure(_) | Error::ConstraintViolation(_) => 3,
        Error::Io { .. } | Error::FormatError(_) => 4,
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    ExperimentConfig::from_json(&text)
}

fn parse_usize_list(spec: &str, what: &str) -> Result<Vec<usize>, Error> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    spec.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad {what} entry '{part}'")))
        })
        .collect()
}

/// Run every seed of the config and emit one long-format CSV (header once,
/// rows grouped per seed).
fn run_all_seeds(config: &ExperimentConfig, out: Option<&Path>) -> Result<(), Error> {
    let mut csv: Option<String> = None;
    for &seed in &config.seeds {
        let (ledger, summary) = run(config, seed)?;
        let meta = RowMeta::from_summary(&summary);
        let rendered = render_run_csv(&meta, &ledger);
        match &mut csv {
            None => csv = Some(rendered),
            Some(existing) => {
                // Append without repeating the header.
                let body = rendered
                    .split_once('\n')
                    .map(|(_, rest)| rest)
                    .unwrap_or("");
                existing.push_str(body);
            }
        }
        eprintln!(
            "run: setting={} algo={} seed={} T={} N={} regret_total={:.4} regret_per_task={:.4} wall={:.2}s",
            summary.setting,
            summary.algo,
            summary.seed,
            summary.num_tasks,
            summary.horizon,
            summary.final_regret_total,
            summary.final_regret_per_task,
            summary.wall_time_secs,
        );
    }
    let text = csv.unwrap_or_else(|| format!("{}\n", harness::CSV_HEADER));
    match out {
        Some(path) => {
            write_text(path, &text)?;
            eprintln!("run: wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Error> {
    let mut config = load_config(config)?;
    if let Some(s) = seed {
        config.seeds = vec![s];
    }
    let out = out.or_else(|| config.out_path.clone().map(PathBuf::from));
    run_all_seeds(&config, out.as_deref())
}

fn cmd_sweep(
    config: &Path,
    tasks: &str,
    ranks: &str,
    seed_count: u64,
    out: &Path,
) -> Result<(), Error> {
    let base = load_config(config)?;
    let t_values = parse_usize_list(tasks, "tasks")?;
    let k_values = parse_usize_list(ranks, "ranks")?;
    let seeds: Vec<u64> = (0..seed_count).collect();
    let name = sweep_output_name(&base, &t_values, &k_values, &seeds);
    let path = out.join(&name);
    if path.exists() {
        eprintln!("sweep: {} already exists, nothing to do", path.display());
        return Ok(());
    }
    let outcome = sweep(&base, &t_values, &k_values, &seeds);
    for (cell, message) in &outcome.failures {
        eprintln!(
            "sweep: cell T={} k={} algo={} seed={} failed: {message}",
            cell.num_tasks,
            cell.rank,
            cell.algo.as_str(),
            cell.seed
        );
    }
    let written = write_summary_csv_if_absent(&path, &outcome.summaries)?;
    if written {
        eprintln!(
            "sweep: wrote {} ({} rows, {} failures)",
            path.display(),
            outcome.summaries.len(),
            outcome.failures.len()
        );
    }
    if !outcome.failures.is_empty() {
        let sidecar = path.with_extension("failures.txt");
        let mut text = String::new();
        for (cell, message) in &outcome.failures {
            text.push_str(&format!(
                "T={} k={} algo={} seed={}: {message}\n",
                cell.num_tasks,
                cell.rank,
                cell.algo.as_str(),
                cell.seed
            ));
        }
        write_text(&sidecar, &text)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_mnist(
    images: &Path,
    labels: &Path,
    test_images: Option<&Path>,
    test_labels: Option<&Path>,
    digits: &str,
    algo: &str,
    k: usize,
    rounds: usize,
    seed: u64,
    pca: Option<usize>,
    out: &Path,
) -> Result<(), Error> {
    let algo: Algo = algo.parse()?;
    if !matches!(algo, Algo::MlinGreedy | Algo::IndependentGreedy) {
        return Err(Error::Config(format!(
            "mnist supports mlin_greedy and independent_greedy, not {}",
            algo.as_str()
        )));
    }
    let parsed = parse_digits(digits)?;
    let num_tasks = parsed.len() * (parsed.len() - 1) / 2;
    let dim = pca.unwrap_or(784);
    let config = ExperimentConfig {
        setting: Setting::Mnist,
        dim,
        rank: k,
        num_actions: Some(2),
        num_tasks,
        horizon: rounds,
        algo,
        seeds: vec![seed],
        e2tc: None,
        mnist: Some(MnistConfig {
            images: images.display().to_string(),
            labels: labels.display().to_string(),
            test_images: test_images.map(|p| p.display().to_string()),
            test_labels: test_labels.map(|p| p.display().to_string()),
            digits: Some(digits.to_string()),
            pca_dim: pca,
        }),
        out_path: None,
    };
    config.validate()?;
    run_all_seeds(&config, Some(out))
}

fn cmd_selftest() -> Result<(), Error> {
    let report = selftest();
    for check in &report.checks {
        println!(
            "{} {} ({})",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    if report.all_passed() {
        println!("selftest: all {} checks passed", report.checks.len());
        Ok(())
    } else {
        Err(Error::numerical("selftest reported failures"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, seed, out } => cmd_run(config, *seed, out.clone()),
        Command::Sweep {
            config,
            tasks,
            ranks,
            seeds,
            out,
        } => cmd_sweep(config, tasks, ranks, *seeds, out),
        Command::Mnist {
            images,
            labels,
            test_images,
            test_labels,
            digits,
            algo,
            k,
            rounds,
            seed,
            pca,
            out,
        } => cmd_mnist(
            images,
            labels,
            test_images.as_deref(),
            test_labels.as_deref(),
            digits,
            algo,
            *k,
            *rounds,
            *seed,
            *pca,
            out,
        ),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
