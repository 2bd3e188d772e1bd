//! Greedy finite-action policies on the doubling epoch schedule: the pooled
//! factored fit shared across tasks, and the per-task least-squares baseline.

use crate::envs::{Action, Feedback, RoundContexts, TaskContexts};
use crate::error::{Error, Result};
use crate::lowrank::{coefficients, fit_factored_erm, FitOptions, PooledBatch};
use crate::numerics::{dot, least_squares, Mat, Rng};
use crate::policies::{EpochSchedule, Policy};

/// Per-task argmax of `⟨x, θ̂_t⟩` over the offered contexts; ties break to the
/// lowest index, which also covers the all-zero estimates of the first epoch.
pub(crate) fn greedy_choose(theta_hat: &Mat, contexts: &RoundContexts) -> Result<Vec<Action>> {
    if contexts.tasks.len() != theta_hat.cols() {
        return Err(Error::invalid(format!(
            "round offers {} tasks but the policy tracks {}",
            contexts.tasks.len(),
            theta_hat.cols()
        )));
    }
    let mut out = Vec::with_capacity(contexts.tasks.len());
    for (t, task) in contexts.tasks.iter().enumerate() {
        let TaskContexts::Actions(offers) = task else {
            return Err(Error::invalid(
                "greedy policies require finite action contexts",
            ));
        };
        if offers.is_empty() {
            return Err(Error::invalid(format!("task {t}: empty action set")));
        }
        let theta = theta_hat.col(t);
        let mut best = 0usize;
        let mut best_score = dot(&offers[0], &theta);
        for (i, x) in offers.iter().enumerate().skip(1) {
            let score = dot(x, &theta);
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        out.push(Action::Index(best));
    }
    Ok(out)
}

/// Shared bookkeeping of both greedy policies: epoch-local sample buffer and
/// round accounting.
struct EpochBuffer {
    schedule: EpochSchedule,
    buffer: PooledBatch,
    round: usize,
    refits: usize,
}

impl EpochBuffer {
    fn new(dim: usize, num_tasks: usize, schedule: EpochSchedule) -> Self {
        EpochBuffer {
            schedule,
            buffer: PooledBatch::new(dim, num_tasks),
            round: 0,
            refits: 0,
        }
    }

    /// Append the chosen contexts and rewards; returns true when the round
    /// closes an epoch and the estimator must be refit.
    fn absorb(
        &mut self,
        contexts: &RoundContexts,
        actions: &[Action],
        feedback: &Feedback,
    ) -> Result<bool> {
        if contexts.round != self.round + 1 {
            return Err(Error::invalid(format!(
                "round {} arrived out of order (expected {})",
                contexts.round,
                self.round + 1
            )));
        }
        if self.round >= self.schedule.horizon() {
            return Err(Error::invalid("round past the configured horizon"));
        }
        let num_tasks = self.buffer.num_tasks();
        if actions.len() != num_tasks || feedback.rewards.len() != num_tasks {
            return Err(Error::invalid("actions/feedback length mismatch"));
        }
        for (t, action) in actions.iter().enumerate() {
            let TaskContexts::Actions(offers) = &contexts.tasks[t] else {
                return Err(Error::invalid("greedy policies require finite contexts"));
            };
            let Action::Index(i) = *action else {
                return Err(Error::invalid("greedy policies choose action indices"));
            };
            let chosen = offers
                .get(i)
                .ok_or_else(|| Error::invalid(format!("task {t}: index {i} out of range")))?;
            self.buffer.push_sample(t, chosen, feedback.rewards[t])?;
        }
        self.round += 1;
        Ok(self.schedule.is_refit_round(self.round))
    }
}

/// Multi-task greedy policy: after each epoch, refit the shared factor pair on
/// that epoch's data and act greedily on `θ̂_t = B̂·ŵ_t`.
pub struct MLinGreedy {
    state: EpochBuffer,
    theta_hat: Mat,
    rank: usize,
    rng: Rng,
    opts: FitOptions,
}

impl MLinGreedy {
    pub fn new(
        dim: usize,
        rank: usize,
        num_tasks: usize,
        schedule: EpochSchedule,
        rng: Rng,
    ) -> Result<Self> {
        if rank == 0 || rank > dim {
            return Err(Error::invalid(format!(
                "MLinGreedy: need 1 <= k <= d, got k = {rank}, d = {dim}"
            )));
        }
        Ok(MLinGreedy {
            state: EpochBuffer::new(dim, num_tasks, schedule),
            theta_hat: Mat::zeros(dim, num_tasks),
            rank,
            rng,
            opts: FitOptions::default(),
        })
    }

    pub fn with_fit_options(mut self, opts: FitOptions) -> Self {
        self.opts = opts;
        self
    }

    /// Current coefficient estimates (zero before the first refit).
    pub fn theta_hat(&self) -> &Mat {
        &self.theta_hat
    }

    pub fn refits(&self) -> usize {
        self.state.refits
    }

    /// Residual of the current estimates on the given epoch batch; test hook
    /// for the in-sample guarantee.
    pub fn buffered_samples(&self) -> usize {
        self.state.buffer.total_samples()
    }
}

impl Policy for MLinGreedy {
    fn choose(&mut self, contexts: &RoundContexts) -> Result<Vec<Action>> {
        greedy_choose(&self.theta_hat, contexts)
    }

    fn observe(
        &mut self,
        contexts: &RoundContexts,
        actions: &[Action],
        feedback: &Feedback,
    ) -> Result<()> {
        if self.state.absorb(contexts, actions, feedback)? {
            let epoch = self.state.refits + 1;
            let fit_rng = self.rng.derive_child(&format!("epoch:{epoch}"));
            let (pair, _) = fit_factored_erm(&self.state.buffer, self.rank, &fit_rng, self.opts)?;
            self.theta_hat = coefficients(&pair);
            self.state.buffer.clear();
            self.state.refits += 1;
        }
        Ok(())
    }
}

/// Baseline: identical schedule and greedy rule, but every task refits its own
/// unconstrained least-squares estimate (minimum-norm on singular systems).
pub struct IndependentGreedy {
    state: EpochBuffer,
    theta_hat: Mat,
}

impl IndependentGreedy {
    pub fn new(dim: usize, num_tasks: usize, schedule: EpochSchedule) -> Self {
        IndependentGreedy {
            state: EpochBuffer::new(dim, num_tasks, schedule),
            theta_hat: Mat::zeros(dim, num_tasks),
        }
    }

    pub fn theta_hat(&self) -> &Mat {
        &self.theta_hat
    }

    pub fn refits(&self) -> usize {
        self.state.refits
    }
}

impl Policy for IndependentGreedy {
    fn choose(&mut self, contexts: &RoundContexts) -> Result<Vec<Action>> {
        greedy_choose(&self.theta_hat, contexts)
    }

    fn observe(
        &mut self,
        contexts: &RoundContexts,
        actions: &[Action],
        feedback: &Feedback,
    ) -> Result<()> {
        if self.state.absorb(contexts, actions, feedback)? {
            let dim = self.theta_hat.rows();
            for t in 0..self.state.buffer.num_tasks() {
                let design = self.state.buffer.design(t);
                let rewards = self.state.buffer.rewards(t);
                let theta = if rewards.is_empty() {
                    vec![0.0; dim]
                } else {
                    least_squares(&design, rewards, 0.0)?
                };
                for (i, v) in theta.iter().enumerate() {
                    self.theta_hat.set(i, t, *v);
                }
            }
            self.state.buffer.clear();
            self.state.refits += 1;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::epoch_schedule;

    fn contexts_of(round: usize, offers: Vec<Vec<Vec<f64>>>) -> RoundContexts {
        RoundContexts {
            round,
            tasks: offers.into_iter().map(TaskContexts::Actions).collect(),
        }
    }

    #[test]
    fn zero_estimate_breaks_ties_to_lowest_index() {
        let theta = Mat::zeros(2, 2);
        let ctx = contexts_of(
            1,
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![-1.0, 2.0], vec![3.0, 4.0]],
            ],
        );
        let actions = greedy_choose(&theta, &ctx).unwrap();
        assert_eq!(actions, vec![Action::Index(0), Action::Index(0)]);
    }

    #[test]
    fn argmax_picks_largest_inner_product() {
        let theta = Mat::from_row_major(2, 1, vec![1.0, 0.0]).unwrap();
        let ctx = contexts_of(1, vec![vec![vec![1.0, 0.0], vec![2.0, 0.0]]]);
        let actions = greedy_choose(&theta, &ctx).unwrap();
        assert_eq!(actions, vec![Action::Index(1)]);
    }

    #[test]
    fn positive_scaling_leaves_choices_unchanged() {
        let mut rng = Rng::new(12);
        for _ in 0..20 {
            let d = 4;
            let t_count = 3;
            let theta = Mat::from_fn(d, t_count, |_, _| rng.standard_normal());
            let mut scaled = theta.clone();
            scaled.scale(3.7);
            let offers: Vec<Vec<Vec<f64>>> = (0..t_count)
                .map(|_| {
                    (0..5)
                        .map(|_| (0..d).map(|_| rng.standard_normal()).collect())
                        .collect()
                })
                .collect();
            let ctx = contexts_of(1, offers);
            assert_eq!(
                greedy_choose(&theta, &ctx).unwrap(),
                greedy_choose(&scaled, &ctx).unwrap()
            );
        }
    }

    #[test]
    fn buffer_size_at_refit_matches_epoch_length() {
        // N = 16: epochs (0,4], (4,16]; refits at 4 and 16.
        let schedule = epoch_schedule(16).unwrap();
        let mut policy = IndependentGreedy::new(2, 3, schedule);
        for n in 1..=16 {
            let offers = vec![vec![vec![n as f64, 0.0], vec![0.0, 1.0]]; 3];
            let ctx = contexts_of(n, offers);
            let actions = policy.choose(&ctx).unwrap();
            let feedback = Feedback {
                rewards: vec![0.5; 3],
            };
            // Check the buffer right before absorbing a refit round.
            if n == 4 || n == 16 {
                let expected = 3 * (if n == 4 { 4 } else { 12 } - 1);
                assert_eq!(policy.state.buffer.total_samples(), expected);
            }
            policy.observe(&ctx, &actions, &feedback).unwrap();
            if n == 4 {
                assert_eq!(policy.refits(), 1);
                assert_eq!(policy.state.buffer.total_samples(), 0);
            }
        }
        assert_eq!(policy.refits(), 2);
    }

    #[test]
    fn rounds_must_arrive_in_order() {
        let schedule = epoch_schedule(16).unwrap();
        let mut policy = IndependentGreedy::new(2, 1, schedule);
        let ctx = contexts_of(2, vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]);
        let err = policy.observe(&ctx, &[Action::Index(0)], &Feedback { rewards: vec![0.0] });
        assert!(err.is_err());
    }

    #[test]
    fn theta_hat_is_zero_until_first_refit() {
        let schedule = epoch_schedule(100).unwrap();
        let mut rng = Rng::new(0);
        let mut policy = MLinGreedy::new(3, 1, 2, schedule, Rng::new(1)).unwrap();
        for n in 1..10 {
            assert_eq!(policy.theta_hat().max_abs(), 0.0);
            let offers: Vec<Vec<Vec<f64>>> = (0..2)
                .map(|_| {
                    (0..2)
                        .map(|_| (0..3).map(|_| rng.standard_normal()).collect())
                        .collect()
                })
                .collect();
            let ctx = contexts_of(n, offers);
            let actions = policy.choose(&ctx).unwrap();
            // First epoch: all-zero estimate forces index 0 everywhere.
            assert!(actions.iter().all(|a| *a == Action::Index(0)));
            let feedback = Feedback {
                rewards: vec![rng.standard_normal(), rng.standard_normal()],
            };
            policy.observe(&ctx, &actions, &feedback).unwrap();
        }
        // Round 10 = G_1 triggers the first refit.
        assert_eq!(policy.refits(), 0);
        let offers: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| {
                (0..2)
                    .map(|_| (0..3).map(|_| rng.standard_normal()).collect())
                    .collect()
            })
            .collect();
        let ctx = contexts_of(10, offers);
        let actions = policy.choose(&ctx).unwrap();
        policy
            .observe(
                &ctx,
                &actions,
                &Feedback {
                    rewards: vec![1.0, -1.0],
                },
            )
            .unwrap();
        assert_eq!(policy.refits(), 1);
        assert!(policy.theta_hat().max_abs() > 0.0);
    }

    #[test]
    fn full_rank_single_task_matches_independent_baseline() {
        // With k = d the factorization is unrestricted, so both policies see
        // the same estimates and choose the same actions on a shared
        // environment stream.
        use crate::envs::{draw_round, gen_finite, pull};
        let d = 3;
        let n = 100;
        let inst = gen_finite(d, d, 1, 4, 37).unwrap();
        let env_rng = Rng::new(404).derive_child("env");
        let schedule = epoch_schedule(n).unwrap();
        let mut mlg = MLinGreedy::new(d, d, 1, schedule.clone(), Rng::new(8)).unwrap();
        let mut ind = IndependentGreedy::new(d, 1, schedule);
        let mut transcripts = (Vec::new(), Vec::new());
        for round in 1..=n {
            let drawn = draw_round(&inst, round, &env_rng).unwrap();
            let a_m = mlg.choose(&drawn.contexts).unwrap();
            let fb_m = pull(&inst, &drawn, &a_m, &env_rng).unwrap();
            mlg.observe(&drawn.contexts, &a_m, &fb_m).unwrap();
            let a_i = ind.choose(&drawn.contexts).unwrap();
            let fb_i = pull(&inst, &drawn, &a_i, &env_rng).unwrap();
            ind.observe(&drawn.contexts, &a_i, &fb_i).unwrap();
            transcripts.0.push(a_m);
            transcripts.1.push(a_i);
        }
        assert_eq!(transcripts.0, transcripts.1);
        assert_eq!(mlg.refits(), ind.refits());
    }

    #[test]
    fn noiseless_refit_leaves_tiny_in_sample_residual() {
        // Rank-1 truth with exact rewards: after the first refit, predictions
        // on the training epoch reproduce the rewards.
        let schedule = epoch_schedule(100).unwrap();
        let mut policy = MLinGreedy::new(2, 1, 2, schedule, Rng::new(4)).unwrap();
        let theta = [0.8, -0.6];
        let mut rng = Rng::new(9);
        let mut seen: Vec<(usize, Vec<Vec<f64>>, Vec<f64>)> = Vec::new();
        for n in 1..=10 {
            let offers: Vec<Vec<Vec<f64>>> = (0..2)
                .map(|_| {
                    (0..3)
                        .map(|_| (0..2).map(|_| rng.standard_normal()).collect())
                        .collect()
                })
                .collect();
            let ctx = contexts_of(n, offers.clone());
            let actions = policy.choose(&ctx).unwrap();
            let rewards: Vec<f64> = (0..2)
                .map(|t| {
                    let Action::Index(i) = actions[t] else {
                        unreachable!()
                    };
                    dot(&offers[t][i], &theta)
                })
                .collect();
            let chosen: Vec<Vec<f64>> = (0..2)
                .map(|t| {
                    let Action::Index(i) = actions[t] else {
                        unreachable!()
                    };
                    offers[t][i].clone()
                })
                .collect();
            seen.push((n, chosen, rewards.clone()));
            policy
                .observe(&ctx, &actions, &Feedback { rewards })
                .unwrap();
        }
        assert_eq!(policy.refits(), 1);
        let mut residual: f64 = 0.0;
        for (_, chosen, rewards) in &seen {
            for t in 0..2 {
                let pred = dot(&chosen[t], &policy.theta_hat().col(t));
                residual += (pred - rewards[t]).powi(2);
            }
        }
        assert!(residual <= 1e-8, "in-sample residual {residual}");
    }
}
