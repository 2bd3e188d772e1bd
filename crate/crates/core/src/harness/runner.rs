//! The round loop: construct instance and policy from a config, drive
//! draw → choose → pull → observe, and account regret.

use super::config::{Algo, ExperimentConfig, Setting};
use super::csvout::RowMeta;
use super::ledger::{RegretLedger, RunSummary};
use crate::envs::{
    build_mnist_tasks, build_mnist_tasks_with_pca, draw_round, gen_finite, gen_infinite,
    instant_regret, parse_idx, pull, HiddenInstance,
};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::policies::{
    e2tc_budgets_with_exponent, epoch_schedule, E2tc, IndependentGreedy, MLinGreedy, Pege, Policy,
};
use std::time::Instant;

// The infinite-action generator uses the unit ball: Q_t = I, λ0 = 1.
const LAMBDA0: f64 = 1.0;

/// Build the hidden instance described by the config. The instance seed is
/// derived from the environment stream so that policy-side reseeding can never
/// change the environment.
pub fn build_instance(config: &ExperimentConfig, env_rng: &Rng) -> Result<HiddenInstance> {
    let inst_seed = env_rng.derive_child("instance").seed();
    match config.setting {
        Setting::Finite => gen_finite(
            config.dim,
            config.rank,
            config.num_tasks,
            config
                .num_actions
                .ok_or_else(|| Error::Config("finite setting requires K".into()))?,
            inst_seed,
        ),
        Setting::Infinite => gen_infinite(
            config.dim,
            config.rank,
            config.num_tasks,
            LAMBDA0,
            inst_seed,
        ),
        Setting::Mnist => {
            let paths = config
                .mnist
                .as_ref()
                .ok_or_else(|| Error::Config("mnist setting requires file paths".into()))?;
            let digits = config.mnist_digits()?;
            let read_idx = |path: &str| -> Result<crate::envs::IdxData> {
                let bytes = std::fs::read(path).map_err(|e| Error::io(path.to_string(), e))?;
                parse_idx(&bytes)
            };
            let mut images = read_idx(&paths.images)?;
            let mut labels = read_idx(&paths.labels)?;
            // An optional second pair (the test split) merges into the pools.
            match (&paths.test_images, &paths.test_labels) {
                (None, None) => {}
                (Some(ti), Some(tl)) => {
                    let extra_images = read_idx(ti)?;
                    let extra_labels = read_idx(tl)?;
                    if extra_images.record_len() != images.record_len() {
                        return Err(Error::Config(
                            "test images have a different record shape".into(),
                        ));
                    }
                    images.dims[0] += extra_images.dims[0];
                    images.payload.extend_from_slice(&extra_images.payload);
                    labels.dims[0] += extra_labels.dims[0];
                    labels.payload.extend_from_slice(&extra_labels.payload);
                }
                _ => {
                    return Err(Error::Config(
                        "test_images and test_labels must be given together".into(),
                    ))
                }
            }
            let inst = match paths.pca_dim {
                None => build_mnist_tasks(&images, &labels, &digits, inst_seed)?,
                Some(p) => build_mnist_tasks_with_pca(&images, &labels, &digits, inst_seed, p)?,
            };
            if config.rank > inst.dim() {
                return Err(Error::Config(format!(
                    "k = {} exceeds the context dimension {}",
                    config.rank,
                    inst.dim()
                )));
            }
            Ok(inst)
        }
    }
}

fn build_policy(
    config: &ExperimentConfig,
    inst: &HiddenInstance,
    policy_rng: Rng,
) -> Result<Box<dyn Policy>> {
    let dim = inst.dim();
    let num_tasks = inst.num_tasks();
    match config.algo {
        Algo::MlinGreedy => {
            let schedule = epoch_schedule(config.horizon)?;
            Ok(Box::new(MLinGreedy::new(
                dim,
                config.rank,
                num_tasks,
                schedule,
                policy_rng,
            )?))
        }
        Algo::IndependentGreedy => {
            let schedule = epoch_schedule(config.horizon)?;
            Ok(Box::new(IndependentGreedy::new(dim, num_tasks, schedule)))
        }
        Algo::E2tc => {
            let params = config.e2tc.unwrap_or_default();
            let exponent = params.exponent_c.unwrap_or(1.5);
            let (n1, n2) = e2tc_budgets_with_exponent(
                config.horizon,
                num_tasks,
                dim,
                config.rank,
                params.c1,
                params.c2,
                exponent,
            )?;
            Ok(Box::new(E2tc::new(
                dim,
                config.rank,
                num_tasks,
                n1,
                n2,
                LAMBDA0,
                policy_rng,
            )?))
        }
        Algo::Pege => Ok(Box::new(Pege::new(dim, num_tasks, LAMBDA0)?)),
    }
}

/// Row identity for CSV rendering of a run.
pub fn row_meta(config: &ExperimentConfig, inst: &HiddenInstance, seed: u64) -> RowMeta {
    RowMeta {
        setting: config.setting.as_str().to_string(),
        algo: config.algo.as_str().to_string(),
        seed,
        dim: inst.dim(),
        rank: config.rank,
        num_actions: inst.num_actions().unwrap_or(0),
        num_tasks: inst.num_tasks(),
        horizon: config.horizon,
    }
}

/// Run one experiment with explicit environment/policy streams.
pub fn run_seeded(
    config: &ExperimentConfig,
    env_rng: &Rng,
    policy_rng: Rng,
    seed_label: u64,
) -> Result<(RegretLedger, RunSummary)> {
    config.validate()?;
    let started = Instant::now();
    let inst = build_instance(config, env_rng)?;
    let mut policy = build_policy(config, &inst, policy_rng)?;
    let mut ledger = RegretLedger::new(inst.num_tasks());
    run_policy_loop(&inst, policy.as_mut(), config.horizon, env_rng, &mut ledger)?;
    ledger.verify_conservation()?;
    let summary = RunSummary {
        setting: config.setting.as_str().to_string(),
        algo: config.algo.as_str().to_string(),
        seed: seed_label,
        dim: inst.dim(),
        rank: config.rank,
        num_actions: inst.num_actions().unwrap_or(0),
        num_tasks: inst.num_tasks(),
        horizon: config.horizon,
        final_regret_total: ledger.final_cumulative(),
        final_regret_per_task: ledger.final_per_task(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((ledger, summary))
}

/// Run one experiment: environment and policy streams are both derived from
/// the run seed, so a `(config, seed)` pair fixes the full transcript.
pub fn run(config: &ExperimentConfig, seed: u64) -> Result<(RegretLedger, RunSummary)> {
    let root = Rng::new(seed);
    let env_rng = root.derive_child("env");
    let policy_rng = root.derive_child("policy");
    run_seeded(config, &env_rng, policy_rng, seed)
}

/// Drive any policy through the round loop against an instance. Exposed for
/// validation policies in tests and the self-test suite.
pub fn run_policy_loop(
    inst: &HiddenInstance,
    policy: &mut dyn Policy,
    horizon: usize,
    env_rng: &Rng,
    ledger: &mut RegretLedger,
) -> Result<()> {
    for n in 1..=horizon {
        let step = |what: &str, e: Error| {
            Error::NumericalFailure(format!("round {n}: {what} failed: {e}"))
        };
        let drawn = draw_round(inst, n, env_rng).map_err(|e| step("context draw", e))?;
        let actions = policy
            .choose(&drawn.contexts)
            .map_err(|e| step("choose", e))?;
        let feedback = pull(inst, &drawn, &actions, env_rng).map_err(|e| step("pull", e))?;
        policy
            .observe(&drawn.contexts, &actions, &feedback)
            .map_err(|e| step("observe", e))?;
        let regs = instant_regret(inst, &drawn, &actions).map_err(|e| step("regret", e))?;
        ledger.push_round(&regs).map_err(|e| step("ledger", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::csvout::render_run_csv;
    use crate::policies::{OraclePolicy, UniformRandomPolicy};

    fn finite_config(t: usize, n: usize) -> ExperimentConfig {
        ExperimentConfig {
            setting: Setting::Finite,
            dim: 4,
            rank: 2,
            num_actions: Some(3),
            num_tasks: t,
            horizon: n,
            algo: Algo::IndependentGreedy,
            seeds: vec![1],
            e2tc: None,
            mnist: None,
            out_path: None,
        }
    }

    #[test]
    fn oracle_policy_has_zero_regret() {
        let config = finite_config(3, 50);
        let env_rng = Rng::new(9).derive_child("env");
        let inst = build_instance(&config, &env_rng).unwrap();
        let mut policy = OraclePolicy::new(inst.theta().clone());
        let mut ledger = RegretLedger::new(inst.num_tasks());
        run_policy_loop(&inst, &mut policy, 50, &env_rng, &mut ledger).unwrap();
        assert_eq!(ledger.final_cumulative(), 0.0);

        // Infinite setting too: the oracle plays the ellipsoid argmax.
        let mut config = finite_config(3, 20);
        config.setting = Setting::Infinite;
        config.num_actions = None;
        config.algo = Algo::Pege;
        let inst = build_instance(&config, &env_rng).unwrap();
        let mut policy = OraclePolicy::new(inst.theta().clone());
        let mut ledger = RegretLedger::new(inst.num_tasks());
        run_policy_loop(&inst, &mut policy, 20, &env_rng, &mut ledger).unwrap();
        assert!(ledger.final_cumulative() <= 1e-9);
    }

    #[test]
    fn uniform_random_regret_matches_monte_carlo_expectation() {
        // K = 2 symmetric contexts: a uniform picker pays half the mean gap
        // per round. Compare the run's mean per-round regret against an
        // independent context-distribution estimate.
        let mut config = finite_config(1, 20_000);
        config.num_actions = Some(2);
        let env_rng = Rng::new(33).derive_child("env");
        let inst = build_instance(&config, &env_rng).unwrap();
        let mut policy = UniformRandomPolicy::new(Rng::new(5));
        let mut ledger = RegretLedger::new(1);
        run_policy_loop(&inst, &mut policy, 20_000, &env_rng, &mut ledger).unwrap();
        let observed_mean = ledger.final_cumulative() / 20_000.0;

        // Independent Monte-Carlo oracle for E[gap]/2 under the same instance.
        let mut mc = Rng::new(1234);
        let probe_rng = Rng::new(777);
        let mut gaps = Vec::with_capacity(20_000);
        for n in 1..=20_000 {
            let drawn = draw_round(&inst, n, &probe_rng).unwrap();
            let crate::envs::TaskContexts::Actions(offers) = &drawn.contexts.tasks[0] else {
                panic!()
            };
            let theta = inst.theta().col(0);
            let v0 = crate::numerics::dot(&offers[0], &theta);
            let v1 = crate::numerics::dot(&offers[1], &theta);
            let _ = mc.next_u64();
            gaps.push((v0 - v1).abs() / 2.0);
        }
        let mc_mean: f64 = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let mc_var: f64 = gaps
            .iter()
            .map(|g| (g - mc_mean) * (g - mc_mean))
            .sum::<f64>()
            / gaps.len() as f64;
        // Combined standard error of the two independent estimates.
        let se = (2.0 * mc_var / gaps.len() as f64).sqrt();
        assert!(
            (observed_mean - mc_mean).abs() <= 3.0 * se.max(1e-4),
            "observed {observed_mean} vs oracle {mc_mean} (se {se})"
        );
    }

    #[test]
    fn identical_seed_gives_identical_csv() {
        let mut config = finite_config(2, 40);
        config.algo = Algo::MlinGreedy;
        let (ledger_a, summary_a) = run(&config, 99).unwrap();
        let (ledger_b, summary_b) = run(&config, 99).unwrap();
        let env_rng = Rng::new(99).derive_child("env");
        let inst = build_instance(&config, &env_rng).unwrap();
        let meta = row_meta(&config, &inst, 99);
        let csv_a = render_run_csv(&meta, &ledger_a);
        let csv_b = render_run_csv(&meta, &ledger_b);
        assert_eq!(csv_a, csv_b);
        assert_eq!(summary_a.final_regret_total, summary_b.final_regret_total);
        let (ledger_c, _) = run(&config, 100).unwrap();
        assert_ne!(
            ledger_a.final_cumulative(),
            ledger_c.final_cumulative(),
            "different seeds should not collide"
        );
    }

    #[test]
    fn policy_seed_does_not_change_the_environment() {
        let mut config = finite_config(2, 30);
        config.algo = Algo::MlinGreedy;
        let env_rng = Rng::new(4).derive_child("env");
        let inst_a = build_instance(&config, &env_rng).unwrap();
        let inst_b = build_instance(&config, &env_rng).unwrap();
        assert_eq!(inst_a.theta().data(), inst_b.theta().data());
        // Same env stream, different policy streams: offered contexts agree.
        for n in [1usize, 7, 30] {
            let a = draw_round(&inst_a, n, &env_rng).unwrap();
            let b = draw_round(&inst_b, n, &env_rng).unwrap();
            for t in 0..2 {
                let (
                    crate::envs::TaskContexts::Actions(xa),
                    crate::envs::TaskContexts::Actions(xb),
                ) = (&a.contexts.tasks[t], &b.contexts.tasks[t])
                else {
                    panic!()
                };
                assert_eq!(xa, xb);
            }
        }
        // And full runs with distinct policy streams still see identical
        // environments (regret differs only through the chosen actions).
        let (l1, _) = run_seeded(&config, &env_rng, Rng::new(1), 0).unwrap();
        let (l2, _) = run_seeded(&config, &env_rng, Rng::new(2), 0).unwrap();
        assert_eq!(l1.rounds(), l2.rounds());
    }

    #[test]
    fn mnist_test_split_merges_into_pools() {
        use crate::envs::{serialize_idx, IdxData, InstanceKind};
        let dir = std::env::temp_dir().join(format!("mtlb_merge_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let make = |digits: &[u8], per: usize| -> (IdxData, IdxData) {
            let mut payload = Vec::new();
            let mut labels = Vec::new();
            for &d in digits {
                for _ in 0..per {
                    payload.extend(std::iter::repeat_n(d * 20, 16));
                    labels.push(d);
                }
            }
            (
                IdxData {
                    dims: vec![labels.len(), 4, 4],
                    payload,
                },
                IdxData {
                    dims: vec![labels.len()],
                    payload: labels,
                },
            )
        };
        let (train_i, train_l) = make(&[1, 2], 3);
        let (test_i, test_l) = make(&[1, 2], 2);
        let paths: Vec<_> = ["ti", "tl", "si", "sl"]
            .iter()
            .map(|n| dir.join(format!("{n}.idx")))
            .collect();
        std::fs::write(&paths[0], serialize_idx(&train_i).unwrap()).unwrap();
        std::fs::write(&paths[1], serialize_idx(&train_l).unwrap()).unwrap();
        std::fs::write(&paths[2], serialize_idx(&test_i).unwrap()).unwrap();
        std::fs::write(&paths[3], serialize_idx(&test_l).unwrap()).unwrap();

        let config = ExperimentConfig {
            setting: Setting::Mnist,
            dim: 16,
            rank: 1,
            num_actions: Some(2),
            num_tasks: 1,
            horizon: 10,
            algo: Algo::IndependentGreedy,
            seeds: vec![0],
            e2tc: None,
            mnist: Some(super::super::config::MnistConfig {
                images: paths[0].display().to_string(),
                labels: paths[1].display().to_string(),
                test_images: Some(paths[2].display().to_string()),
                test_labels: Some(paths[3].display().to_string()),
                digits: Some("1,2".into()),
                pca_dim: None,
            }),
            out_path: None,
        };
        let env_rng = Rng::new(0).derive_child("env");
        let inst = build_instance(&config, &env_rng).unwrap();
        let InstanceKind::Mnist(m) = inst.kind() else {
            panic!()
        };
        assert_eq!(m.pool_size(1), Some(5));
        assert_eq!(m.pool_size(2), Some(5));

        // Giving only one half of the pair is a config error.
        let mut broken = config.clone();
        broken.mnist.as_mut().unwrap().test_labels = None;
        assert!(build_instance(&broken, &env_rng).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn e2tc_and_pege_run_end_to_end() {
        let config = ExperimentConfig {
            setting: Setting::Infinite,
            dim: 5,
            rank: 2,
            num_actions: None,
            num_tasks: 4,
            horizon: 400,
            algo: Algo::E2tc,
            seeds: vec![0],
            e2tc: Some(super::super::config::E2tcParams {
                c1: 0.2,
                c2: 1.0,
                exponent_c: Some(1.0),
            }),
            mnist: None,
            out_path: None,
        };
        let (ledger, summary) = run(&config, 3).unwrap();
        assert_eq!(ledger.rounds(), 400);
        assert!(summary.final_regret_total > 0.0);

        let config = ExperimentConfig {
            algo: Algo::Pege,
            e2tc: None,
            ..config
        };
        let (ledger, _) = run(&config, 3).unwrap();
        assert_eq!(ledger.rounds(), 400);
    }
}
