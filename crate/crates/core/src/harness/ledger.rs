//! Regret accounting for one run.

use crate::error::{Error, Result};

/// Per-round and cumulative regret totals across tasks.
#[derive(Debug, Clone)]
pub struct RegretLedger {
    num_tasks: usize,
    instant: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RegretLedger {
    pub fn new(num_tasks: usize) -> Self {
        RegretLedger {
            num_tasks,
            instant: Vec::new(),
            cumulative: Vec::new(),
        }
    }

    pub fn push_round(&mut self, per_task: &[f64]) -> Result<()> {
        if per_task.len() != self.num_tasks {
            return Err(Error::invalid(format!(
                "regret vector has {} entries for {} tasks",
                per_task.len(),
                self.num_tasks
            )));
        }
        if per_task.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::numerical(
                "regret entries must be finite and nonnegative",
            ));
        }
        let total: f64 = per_task.iter().sum();
        let prev = self.cumulative.last().copied().unwrap_or(0.0);
        self.instant.push(total);
        self.cumulative.push(prev + total);
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.instant.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    /// Total instantaneous regret of round `n` (1-based).
    pub fn instant_at(&self, n: usize) -> f64 {
        self.instant[n - 1]
    }

    /// Cumulative total regret through round `n` (1-based).
    pub fn cumulative_at(&self, n: usize) -> f64 {
        self.cumulative[n - 1]
    }

    /// Cumulative per-task average through round `n`.
    pub fn per_task_at(&self, n: usize) -> f64 {
        self.cumulative_at(n) / self.num_tasks as f64
    }

    pub fn final_cumulative(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn final_per_task(&self) -> f64 {
        self.final_cumulative() / self.num_tasks as f64
    }

    /// Double-entry check: the running cumulative tail must equal a fresh
    /// summation of the instantaneous column.
    pub fn verify_conservation(&self) -> Result<()> {
        let fresh: f64 = self.instant.iter().sum();
        let tail = self.final_cumulative();
        if (fresh - tail).abs() > 1e-9 * (1.0 + tail.abs()) {
            return Err(Error::numerical(format!(
                "cumulative regret {tail} disagrees with recomputed sum {fresh}"
            )));
        }
        for w in self.cumulative.windows(2) {
            if w[1] < w[0] {
                return Err(Error::numerical("cumulative regret decreased"));
            }
        }
        Ok(())
    }
}

/// Final facts of one run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub setting: String,
    pub algo: String,
    pub seed: u64,
    pub dim: usize,
    pub rank: usize,
    pub num_actions: usize,
    pub num_tasks: usize,
    pub horizon: usize,
    pub final_regret_total: f64,
    pub final_regret_per_task: f64,
    pub wall_time_secs: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumulative_tracks_instants() {
        let mut ledger = RegretLedger::new(2);
        ledger.push_round(&[1.0, 2.0]).unwrap();
        ledger.push_round(&[0.0, 0.5]).unwrap();
        assert_eq!(ledger.rounds(), 2);
        assert_eq!(ledger.instant_at(1), 3.0);
        assert_eq!(ledger.cumulative_at(2), 3.5);
        assert_eq!(ledger.per_task_at(2), 1.75);
        ledger.verify_conservation().unwrap();
    }

    #[test]
    fn rejects_negative_or_wrong_width() {
        let mut ledger = RegretLedger::new(2);
        assert!(ledger.push_round(&[1.0]).is_err());
        assert!(ledger.push_round(&[1.0, -0.1]).is_err());
        assert!(ledger.push_round(&[1.0, f64::NAN]).is_err());
    }
}
