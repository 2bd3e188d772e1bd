//! Explore-explore-then-commit for ellipsoid action sets.
//!
//! Stage 1 plays uniform sphere actions and accumulates the reward-weighted
//! second-moment matrix `M̂ = (1/N₁T)·Σ r²·x·xᵀ`, whose top-k eigenspace
//! estimates the feature extractor. Stage 2 plays each estimated basis
//! direction `√λ₀·b̂_i` for `N₂/k` rounds per task and regresses the rewards on
//! the k-dimensional features. Stage 3 commits to the per-task ellipsoid
//! argmax of the estimate.

use crate::envs::{ellipsoid_argmax, Action, Feedback, RoundContexts, TaskContexts};
use crate::error::{Error, Result};
use crate::numerics::{least_squares, sample_sphere, top_k_eig, Mat, OrthonormalBasis, Rng};
use crate::policies::Policy;

/// Stage budgets from the theoretical schedule `N₁ = c₁·d^1.5·k·√(N/T)`,
/// `N₂ = c₂·k·√N` (rounded up to a multiple of k).
pub fn e2tc_budgets(
    n: usize,
    num_tasks: usize,
    d: usize,
    k: usize,
    c1: f64,
    c2: f64,
) -> Result<(usize, usize)> {
    e2tc_budgets_with_exponent(n, num_tasks, d, k, c1, c2, 1.5)
}

/// Same schedule with the dimension exponent exposed: `N₁ = c₁·d^c·k·√(N/T)`.
pub fn e2tc_budgets_with_exponent(
    n: usize,
    num_tasks: usize,
    d: usize,
    k: usize,
    c1: f64,
    c2: f64,
    exponent: f64,
) -> Result<(usize, usize)> {
    if n == 0 || num_tasks == 0 || d == 0 || k == 0 {
        return Err(Error::invalid("e2tc_budgets: all inputs must be positive"));
    }
    if c1 <= 0.0 || c1.is_nan() || c2 <= 0.0 || c2.is_nan() || !exponent.is_finite() {
        return Err(Error::invalid("e2tc_budgets: constants must be positive"));
    }
    let n1_raw = c1 * (d as f64).powf(exponent) * k as f64 * (n as f64 / num_tasks as f64).sqrt();
    let n1 = ((n1_raw + 1e-9).floor() as usize).max(1);
    let per_direction = (c2 * (n as f64).sqrt() - 1e-9).ceil().max(1.0) as usize;
    let n2 = k * per_direction;
    if n1 + n2 > n {
        let term = if n1 >= n2 {
            format!("stage-1 budget N1 = {n1}")
        } else {
            format!("stage-2 budget N2 = {n2}")
        };
        return Err(Error::invalid(format!(
            "e2tc_budgets: {term} leaves no room in horizon N = {n} (N1 + N2 = {})",
            n1 + n2
        )));
    }
    Ok((n1, n2))
}

enum Stage {
    MomentExploration,
    BasisExploration,
    Committed,
}

/// The three-stage policy. Constructed with explicit budgets so the harness can
/// expose both the constant and exponent forms of the schedule.
pub struct E2tc {
    d: usize,
    k: usize,
    num_tasks: usize,
    n1: usize,
    n2: usize,
    lambda0: f64,
    round: usize,
    rng: Rng,
    moment_sum: Mat,
    stage2_rewards: Vec<Vec<f64>>,
    b_hat: Option<OrthonormalBasis>,
    theta_hat: Option<Mat>,
    committed: Option<Vec<Vec<f64>>>,
}

impl E2tc {
    pub fn new(
        d: usize,
        k: usize,
        num_tasks: usize,
        n1: usize,
        n2: usize,
        lambda0: f64,
        rng: Rng,
    ) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::invalid(format!(
                "E2tc: need 1 <= k <= d, got k = {k}, d = {d}"
            )));
        }
        if n1 == 0 || n2 == 0 {
            return Err(Error::invalid("E2tc: stage budgets must be positive"));
        }
        if !n2.is_multiple_of(k) {
            return Err(Error::invalid(format!(
                "E2tc: N2 = {n2} must be divisible by k = {k}"
            )));
        }
        if lambda0 <= 0.0 || lambda0.is_nan() {
            return Err(Error::invalid("E2tc: λ0 must be positive"));
        }
        Ok(E2tc {
            d,
            k,
            num_tasks,
            n1,
            n2,
            lambda0,
            round: 0,
            rng,
            moment_sum: Mat::zeros(d, d),
            stage2_rewards: vec![Vec::new(); num_tasks],
            b_hat: None,
            theta_hat: None,
            committed: None,
        })
    }

    fn stage_of(&self, n: usize) -> Stage {
        if n <= self.n1 {
            Stage::MomentExploration
        } else if n <= self.n1 + self.n2 {
            Stage::BasisExploration
        } else {
            Stage::Committed
        }
    }

    /// 1-based stage number at the next round to play; test hook.
    pub fn stage(&self) -> u8 {
        match self.stage_of(self.round + 1) {
            Stage::MomentExploration => 1,
            Stage::BasisExploration => 2,
            Stage::Committed => 3,
        }
    }

    pub fn budgets(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    /// Basis direction (1-based) explored at stage-2 round `n`.
    fn direction_index(&self, n: usize) -> usize {
        let offset = n - self.n1; // 1..=N2
        (offset * self.k).div_ceil(self.n2)
    }

    pub fn b_hat(&self) -> Option<&OrthonormalBasis> {
        self.b_hat.as_ref()
    }

    pub fn theta_hat(&self) -> Option<&Mat> {
        self.theta_hat.as_ref()
    }

    fn stage2_action(&self, n: usize) -> Result<Vec<f64>> {
        let basis = self
            .b_hat
            .as_ref()
            .ok_or_else(|| Error::numerical("stage 2 reached without a basis estimate"))?;
        let i = self.direction_index(n) - 1;
        let s = self.lambda0.sqrt();
        Ok(basis.col(i).iter().map(|v| v * s).collect())
    }
}

impl Policy for E2tc {
    fn choose(&mut self, contexts: &RoundContexts) -> Result<Vec<Action>> {
        let n = self.round + 1;
        if contexts.round != n {
            return Err(Error::invalid(format!(
                "round {} arrived out of order (expected {n})",
                contexts.round
            )));
        }
        if contexts.tasks.len() != self.num_tasks {
            return Err(Error::invalid(format!(
                "round offers {} tasks but the policy tracks {}",
                contexts.tasks.len(),
                self.num_tasks
            )));
        }
        match self.stage_of(n) {
            Stage::MomentExploration => {
                let mut rng = self.rng.derive_child(&format!("stage1:round:{n}"));
                let radius = self.lambda0.sqrt();
                (0..self.num_tasks)
                    .map(|_| Ok(Action::Vector(sample_sphere(self.d, radius, &mut rng)?)))
                    .collect()
            }
            Stage::BasisExploration => {
                let action = self.stage2_action(n)?;
                Ok(vec![Action::Vector(action); self.num_tasks])
            }
            Stage::Committed => {
                let committed = self
                    .committed
                    .as_ref()
                    .ok_or_else(|| Error::numerical("stage 3 reached without estimates"))?;
                Ok(committed
                    .iter()
                    .map(|a| Action::Vector(a.clone()))
                    .collect())
            }
        }
    }

    fn observe(
        &mut self,
        contexts: &RoundContexts,
        actions: &[Action],
        feedback: &Feedback,
    ) -> Result<()> {
        let n = self.round + 1;
        if contexts.round != n {
            return Err(Error::invalid(format!(
                "round {} arrived out of order (expected {n})",
                contexts.round
            )));
        }
        if actions.len() != self.num_tasks || feedback.rewards.len() != self.num_tasks {
            return Err(Error::invalid("actions/feedback length mismatch"));
        }
        match self.stage_of(n) {
            Stage::MomentExploration => {
                for (action, &reward) in actions.iter().zip(&feedback.rewards) {
                    let Action::Vector(x) = action else {
                        return Err(Error::invalid("exploration actions are vectors"));
                    };
                    self.moment_sum.add_scaled_outer(reward * reward, x, x);
                }
                if n == self.n1 {
                    let mut m_hat = self.moment_sum.clone();
                    m_hat.scale(1.0 / (self.n1 * self.num_tasks) as f64);
                    let (basis, _) = top_k_eig(&m_hat, self.k)?;
                    self.b_hat = Some(basis);
                }
            }
            Stage::BasisExploration => {
                for (t, &reward) in feedback.rewards.iter().enumerate() {
                    self.stage2_rewards[t].push(reward);
                }
                if n == self.n1 + self.n2 {
                    self.finish_stage2(contexts)?;
                }
            }
            Stage::Committed => {}
        }
        self.round += 1;
        Ok(())
    }
}

impl E2tc {
    /// Per-task regression of stage-2 rewards on the k-dimensional features
    /// `B̂ᵀx`, followed by the commit-action computation.
    fn finish_stage2(&mut self, contexts: &RoundContexts) -> Result<()> {
        let basis = self
            .b_hat
            .as_ref()
            .ok_or_else(|| Error::numerical("stage 2 finished without a basis estimate"))?;
        let mut features = Mat::zeros(self.n2, self.k);
        for j in 0..self.n2 {
            let x = self.stage2_action(self.n1 + j + 1)?;
            let f = basis.mat().tr_mul_vec(&x);
            for (c, v) in f.iter().enumerate() {
                features.set(j, c, *v);
            }
        }
        let mut theta_hat = Mat::zeros(self.d, self.num_tasks);
        let mut committed = Vec::with_capacity(self.num_tasks);
        for t in 0..self.num_tasks {
            let w_t = least_squares(&features, &self.stage2_rewards[t], 0.0)?;
            let theta_t = basis.mat().mul_vec(&w_t);
            for (i, v) in theta_t.iter().enumerate() {
                theta_hat.set(i, t, *v);
            }
            let TaskContexts::Ellipsoid { q, .. } = &contexts.tasks[t] else {
                return Err(Error::invalid("E2tc requires ellipsoid action sets"));
            };
            committed.push(ellipsoid_argmax(&theta_t, q)?.action);
        }
        self.theta_hat = Some(theta_hat);
        self.committed = Some(committed);
        self.stage2_rewards = vec![Vec::new(); self.num_tasks];
        Ok(())
    }
}
