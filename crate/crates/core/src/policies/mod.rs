//! Sequential decision policies behind one interface: `choose(contexts)` then
//! `observe(feedback)`. Policies see offered contexts, their own actions, and
//! rewards — never the hidden coefficients, covariances, or noise draws.

mod e2tc;
mod greedy;
mod pege;
mod schedule;

pub use e2tc::{e2tc_budgets, e2tc_budgets_with_exponent, E2tc};
pub use greedy::{IndependentGreedy, MLinGreedy};
pub use pege::Pege;
pub use schedule::{epoch_schedule, EpochSchedule};

use crate::envs::{Action, Feedback, RoundContexts, TaskContexts};
use crate::error::{Error, Result};
use crate::numerics::{dot, Mat, Rng};

/// One round of interaction: commit to actions, then absorb the feedback.
/// Rounds arrive in order, one `observe` per `choose`.
pub trait Policy {
    fn choose(&mut self, contexts: &RoundContexts) -> Result<Vec<Action>>;
    fn observe(
        &mut self,
        contexts: &RoundContexts,
        actions: &[Action],
        feedback: &Feedback,
    ) -> Result<()>;
}

/// Reference policy that picks uniformly among the offered actions. Useful as
/// a regret floor in validation runs.
pub struct UniformRandomPolicy {
    rng: Rng,
}

impl UniformRandomPolicy {
    pub fn new(rng: Rng) -> Self {
        UniformRandomPolicy { rng }
    }
}

impl Policy for UniformRandomPolicy {
    fn choose(&mut self, contexts: &RoundContexts) -> Result<Vec<Action>> {
        contexts
            .tasks
            .iter()
            .map(|task| match task {
                TaskContexts::Actions(offers) => {
                    if offers.is_empty() {
                        Err(Error::invalid("empty action set"))
                    } else {
                        Ok(Action::Index(self.rng.index(offers.len())))
                    }
                }
                TaskContexts::Ellipsoid { .. } => Err(Error::invalid(
                    "UniformRandomPolicy requires finite action sets",
                )),
            })
            .collect()
    }

    fn observe(&mut self, _: &RoundContexts, _: &[Action], _: &Feedback) -> Result<()> {
        Ok(())
    }
}

/// Validation-only policy that is handed the true coefficients and always
/// plays the argmax; its regret is identically zero on synthetic instances.
pub struct OraclePolicy {
    theta: Mat,
}

impl OraclePolicy {
    pub fn new(theta: Mat) -> Self {
        OraclePolicy { theta }
    }
}

impl Policy for OraclePolicy {
    fn choose(&mut self, contexts: &RoundContexts) -> Result<Vec<Action>> {
        contexts
            .tasks
            .iter()
            .enumerate()
            .map(|(t, task)| match task {
                TaskContexts::Actions(offers) => {
                    let theta = self.theta.col(t);
                    let mut best = 0usize;
                    let mut best_score = f64::NEG_INFINITY;
                    for (i, x) in offers.iter().enumerate() {
                        let score = dot(x, &theta);
                        if score > best_score {
                            best = i;
                            best_score = score;
                        }
                    }
                    Ok(Action::Index(best))
                }
                TaskContexts::Ellipsoid { q, .. } => {
                    let res = crate::envs::ellipsoid_argmax(&self.theta.col(t), q)?;
                    Ok(Action::Vector(res.action))
                }
            })
            .collect()
    }

    fn observe(&mut self, _: &RoundContexts, _: &[Action], _: &Feedback) -> Result<()> {
        Ok(())
    }
}
