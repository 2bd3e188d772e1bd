//! Phased exploration / greedy exploitation, applied independently per task.
//! Cycle `c`: play the `d` scaled basis actions `√λ₀·e_i` once each, refit the
//! per-task estimate on all exploration data so far, then exploit the ellipsoid
//! argmax for `c` rounds.

use crate::envs::{ellipsoid_argmax, Action, Feedback, RoundContexts, TaskContexts};
use crate::error::{Error, Result};
use crate::policies::Policy;

struct PegeTask {
    cycle: usize,
    /// Position within the cycle: `0..d` exploration, then `d..d+cycle`
    /// exploitation.
    pos: usize,
    /// Accumulated rewards per exploration direction.
    dir_sums: Vec<f64>,
    /// Completed exploration sweeps.
    sweeps: usize,
    /// Estimate from the most recent refit.
    theta_hat: Vec<f64>,
    committed: Vec<f64>,
}

/// Single-task baseline for ellipsoid action sets, run side by side on all
/// tasks. The repeated exploration design is orthogonal, so the least-squares
/// refit reduces to per-direction reward means: `θ̂_i = mean_i / √λ₀`.
pub struct Pege {
    d: usize,
    lambda0: f64,
    tasks: Vec<PegeTask>,
    round: usize,
}

impl Pege {
    pub fn new(d: usize, num_tasks: usize, lambda0: f64) -> Result<Self> {
        if d == 0 || num_tasks == 0 {
            return Err(Error::invalid("Pege: dimensions must be positive"));
        }
        if lambda0 <= 0.0 || lambda0.is_nan() {
            return Err(Error::invalid("Pege: λ0 must be positive"));
        }
        Ok(Pege {
            d,
            lambda0,
            tasks: (0..num_tasks)
                .map(|_| PegeTask {
                    cycle: 1,
                    pos: 0,
                    dir_sums: vec![0.0; d],
                    sweeps: 0,
                    theta_hat: vec![0.0; d],
                    committed: vec![0.0; d],
                })
                .collect(),
            round: 0,
        })
    }

    /// Rounds consumed after completing `c` full cycles: `c·d + c(c+1)/2`.
    pub fn rounds_after_cycles(d: usize, c: usize) -> usize {
        c * d + c * (c + 1) / 2
    }

    /// Estimate from the most recent per-task refit (zero before the first
    /// completed exploration sweep).
    pub fn theta_hat(&self, task: usize) -> Vec<f64> {
        self.tasks[task].theta_hat.clone()
    }

    fn exploration_action(&self, direction: usize) -> Vec<f64> {
        let mut a = vec![0.0; self.d];
        a[direction] = self.lambda0.sqrt();
        a
    }
}

impl Policy for Pege {
    fn choose(&mut self, contexts: &RoundContexts) -> Result<Vec<Action>> {
        if contexts.round != self.round + 1 {
            return Err(Error::invalid(format!(
                "round {} arrived out of order (expected {})",
                contexts.round,
                self.round + 1
            )));
        }
        if contexts.tasks.len() != self.tasks.len() {
            return Err(Error::invalid(format!(
                "round offers {} tasks but the policy tracks {}",
                contexts.tasks.len(),
                self.tasks.len()
            )));
        }
        let mut out = Vec::with_capacity(self.tasks.len());
        for (t, task) in self.tasks.iter().enumerate() {
            if !matches!(contexts.tasks[t], TaskContexts::Ellipsoid { .. }) {
                return Err(Error::invalid("Pege requires ellipsoid action sets"));
            }
            if task.pos < self.d {
                out.push(Action::Vector(self.exploration_action(task.pos)));
            } else {
                out.push(Action::Vector(task.committed.clone()));
            }
        }
        Ok(out)
    }

    fn observe(
        &mut self,
        contexts: &RoundContexts,
        actions: &[Action],
        feedback: &Feedback,
    ) -> Result<()> {
        if contexts.round != self.round + 1 {
            return Err(Error::invalid(format!(
                "round {} arrived out of order (expected {})",
                contexts.round,
                self.round + 1
            )));
        }
        if actions.len() != self.tasks.len() || feedback.rewards.len() != self.tasks.len() {
            return Err(Error::invalid("actions/feedback length mismatch"));
        }
        let d = self.d;
        let lambda0 = self.lambda0;
        for (t, task) in self.tasks.iter_mut().enumerate() {
            if task.pos < d {
                task.dir_sums[task.pos] += feedback.rewards[t];
                task.pos += 1;
                if task.pos == d {
                    task.sweeps += 1;
                    // Orthogonal repeated design: least squares is the
                    // per-direction mean divided by the action scale.
                    let scale = 1.0 / (lambda0.sqrt() * task.sweeps as f64);
                    task.theta_hat = task.dir_sums.iter().map(|s| s * scale).collect();
                    let TaskContexts::Ellipsoid { q, .. } = &contexts.tasks[t] else {
                        return Err(Error::invalid("Pege requires ellipsoid action sets"));
                    };
                    task.committed = ellipsoid_argmax(&task.theta_hat, q)?.action;
                }
            } else {
                task.pos += 1;
                if task.pos == d + task.cycle {
                    task.cycle += 1;
                    task.pos = 0;
                }
            }
        }
        self.round += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{draw_round, gen_infinite, instant_regret, pull};
    use crate::numerics::{dot, least_squares, norm, Mat, Rng};

    #[test]
    fn cycle_round_arithmetic() {
        assert_eq!(Pege::rounds_after_cycles(10, 1), 11);
        assert_eq!(Pege::rounds_after_cycles(10, 3), 36);
        let d = 4;
        let c = 7;
        assert_eq!(Pege::rounds_after_cycles(d, c), c * d + c * (c + 1) / 2);
    }

    #[test]
    fn exploration_actions_are_feasible() {
        let inst = gen_infinite(6, 2, 4, 1.0, 12).unwrap();
        let env_rng = Rng::new(9);
        let mut policy = Pege::new(6, 4, 1.0).unwrap();
        for n in 1..=30 {
            let drawn = draw_round(&inst, n, &env_rng).unwrap();
            let actions = policy.choose(&drawn.contexts).unwrap();
            // pull enforces feasibility; any violation would error here.
            let fb = pull(&inst, &drawn, &actions, &env_rng).unwrap();
            policy.observe(&drawn.contexts, &actions, &fb).unwrap();
        }
    }

    #[test]
    fn noiseless_first_cycle_identifies_theta_exactly() {
        let d = 5;
        let inst = gen_infinite(d, 2, 3, 1.0, 44)
            .unwrap()
            .with_noise_scale(0.0);
        let env_rng = Rng::new(13);
        let mut policy = Pege::new(d, 3, 1.0).unwrap();
        let horizon = 60;
        for n in 1..=horizon {
            let drawn = draw_round(&inst, n, &env_rng).unwrap();
            let actions = policy.choose(&drawn.contexts).unwrap();
            let fb = pull(&inst, &drawn, &actions, &env_rng).unwrap();
            if n > d {
                // After the first exploration sweep the estimate is exact.
                for t in 0..3 {
                    let theta = inst.theta().col(t);
                    let est = policy.theta_hat(t);
                    for i in 0..d {
                        assert!((est[i] - theta[i]).abs() < 1e-10);
                    }
                }
                // Exploitation rounds incur zero regret.
                if policy.tasks[0].pos >= d {
                    let regs = instant_regret(&inst, &drawn, &actions).unwrap();
                    for r in regs {
                        assert!(r < 1e-9, "exploitation regret {r}");
                    }
                }
            }
            policy.observe(&drawn.contexts, &actions, &fb).unwrap();
        }
    }

    #[test]
    fn accumulated_refit_equals_generic_least_squares() {
        // Stack the explicit exploration design and compare against the
        // accumulator-based estimate.
        let d = 3;
        let inst = gen_infinite(d, 1, 2, 1.0, 7).unwrap();
        let env_rng = Rng::new(21);
        let mut policy = Pege::new(d, 2, 1.0).unwrap();
        let mut designs: Vec<Vec<f64>> = vec![Vec::new(); 2];
        let mut responses: Vec<Vec<f64>> = vec![Vec::new(); 2];
        let mut refits_checked = 0;
        for n in 1..=40 {
            let drawn = draw_round(&inst, n, &env_rng).unwrap();
            let actions = policy.choose(&drawn.contexts).unwrap();
            let fb = pull(&inst, &drawn, &actions, &env_rng).unwrap();
            for t in 0..2 {
                if policy.tasks[t].pos < d {
                    let Action::Vector(x) = &actions[t] else {
                        panic!()
                    };
                    designs[t].extend_from_slice(x);
                    responses[t].push(fb.rewards[t]);
                }
            }
            policy.observe(&drawn.contexts, &actions, &fb).unwrap();
            for t in 0..2 {
                // pos == d right after observe means a refit just ran; compare
                // the accumulator estimate to explicit least squares on all
                // exploration data so far.
                if policy.tasks[t].pos != d {
                    continue;
                }
                refits_checked += 1;
                let n_rows = responses[t].len();
                let x = Mat::from_row_major(n_rows, d, designs[t].clone()).unwrap();
                let generic = least_squares(&x, &responses[t], 0.0).unwrap();
                let accumulated = policy.theta_hat(t);
                for i in 0..d {
                    assert!(
                        (generic[i] - accumulated[i]).abs() < 1e-10,
                        "task {t} coord {i}: {} vs {}",
                        generic[i],
                        accumulated[i]
                    );
                }
            }
        }
        assert!(
            refits_checked >= 4,
            "expected several refits, saw {refits_checked}"
        );
    }

    #[test]
    fn committed_actions_converge_to_optimal_direction() {
        let d = 4;
        let inst = gen_infinite(d, 2, 2, 1.0, 3).unwrap();
        let env_rng = Rng::new(2);
        let mut policy = Pege::new(d, 2, 1.0).unwrap();
        for n in 1..=2000 {
            let drawn = draw_round(&inst, n, &env_rng).unwrap();
            let actions = policy.choose(&drawn.contexts).unwrap();
            let fb = pull(&inst, &drawn, &actions, &env_rng).unwrap();
            policy.observe(&drawn.contexts, &actions, &fb).unwrap();
        }
        for t in 0..2 {
            let theta = inst.theta().col(t);
            let opt: Vec<f64> = {
                let n = norm(&theta);
                theta.iter().map(|v| v / n).collect()
            };
            let overlap = dot(&policy.tasks[t].committed, &opt);
            assert!(overlap > 0.95, "task {t}: overlap {overlap}");
        }
    }
}
