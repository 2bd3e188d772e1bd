//! Doubling epoch schedule: refit points `G_m = ⌊N^(1 − 2^−m)⌋` so each
//! epoch's estimator trains only on that epoch's data.

use crate::error::{Error, Result};

/// The grid `G_0 = 0 < G_1 < … < G_M = N` with `M = ⌈log₂ log₂ N⌉`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSchedule {
    horizon: usize,
    bounds: Vec<usize>,
}

impl EpochSchedule {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of epochs `M`.
    pub fn num_epochs(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    /// Whether a refit happens after round `n` (i.e. `n` is some `G_m`, m ≥ 1).
    pub fn is_refit_round(&self, n: usize) -> bool {
        n > 0 && self.bounds[1..].binary_search(&n).is_ok()
    }

    /// Epoch (1-based) containing round `n` (1-based).
    pub fn epoch_of_round(&self, n: usize) -> Option<usize> {
        if n == 0 || n > self.horizon {
            return None;
        }
        Some(match self.bounds.binary_search(&(n - 1)) {
            Ok(m) => m + 1,
            Err(m) => m,
        })
    }
}

/// Build the schedule for horizon `N ≥ 4`. Collisions caused by flooring are
/// deduplicated by dropping the smaller duplicate.
pub fn epoch_schedule(n: usize) -> Result<EpochSchedule> {
    if n < 4 {
        return Err(Error::invalid(format!(
            "epoch_schedule: horizon {n} is below the minimum of 4"
        )));
    }
    // M = ⌈log₂ log₂ N⌉ computed exactly: the smallest m with 2^(2^m) ≥ N.
    let mut m = 1usize;
    while (1u128 << (1u32 << m)) < n as u128 {
        m += 1;
    }
    let mut bounds = vec![0usize];
    for i in 1..m {
        let exponent = 1.0 - 0.5_f64.powi(i as i32);
        let g = ((n as f64).powf(exponent) + 1e-9).floor() as usize;
        bounds.push(g);
    }
    bounds.push(n);
    bounds.dedup();
    Ok(EpochSchedule { horizon: n, bounds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grids() {
        let s = epoch_schedule(10_000).unwrap();
        assert_eq!(s.num_epochs(), 4);
        assert_eq!(s.bounds(), &[0, 100, 1000, 3162, 10_000]);

        let s = epoch_schedule(16).unwrap();
        assert_eq!(s.num_epochs(), 2);
        assert_eq!(s.bounds(), &[0, 4, 16]);

        let s = epoch_schedule(256).unwrap();
        assert_eq!(s.num_epochs(), 3);
        assert_eq!(s.bounds(), &[0, 16, 64, 256]);
    }

    #[test]
    fn rejects_tiny_horizons() {
        for n in 0..4 {
            assert!(epoch_schedule(n).is_err());
        }
        assert!(epoch_schedule(4).is_ok());
    }

    #[test]
    fn bounds_strictly_increase() {
        for n in [
            4usize, 5, 7, 16, 17, 100, 255, 256, 257, 1000, 9999, 10_000, 65_536,
        ] {
            let s = epoch_schedule(n).unwrap();
            let b = s.bounds();
            assert_eq!(b[0], 0);
            assert_eq!(*b.last().unwrap(), n);
            for w in b.windows(2) {
                assert!(w[0] < w[1], "N = {n}: bounds {b:?} not strictly increasing");
            }
        }
    }

    #[test]
    fn epoch_lookup() {
        let s = epoch_schedule(10_000).unwrap();
        assert_eq!(s.epoch_of_round(1), Some(1));
        assert_eq!(s.epoch_of_round(100), Some(1));
        assert_eq!(s.epoch_of_round(101), Some(2));
        assert_eq!(s.epoch_of_round(1000), Some(2));
        assert_eq!(s.epoch_of_round(3162), Some(3));
        assert_eq!(s.epoch_of_round(3163), Some(4));
        assert_eq!(s.epoch_of_round(10_000), Some(4));
        assert_eq!(s.epoch_of_round(10_001), None);
        assert_eq!(s.epoch_of_round(0), None);
        assert!(s.is_refit_round(100));
        assert!(s.is_refit_round(10_000));
        assert!(!s.is_refit_round(99));
        assert!(!s.is_refit_round(0));
    }
}
