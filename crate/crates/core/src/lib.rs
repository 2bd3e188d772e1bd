//! Simulation library for multi-task linear bandits that share a low-dimensional
//! linear representation.
//!
//! `T` linear bandit tasks with coefficient vectors `θ_t = B·w_t` are played
//! concurrently for `N` rounds, where `B` is a `d×k` feature extractor common to
//! all tasks. The crate provides:
//!
//! - [`numerics`]: seeded, splittable random streams and the dense linear-algebra
//!   primitives everything else is built on;
//! - [`lowrank`]: the pooled factored least-squares fit (alternating minimization
//!   over `B` and `W`) plus a brute-force oracle for small instances;
//! - [`envs`]: synthetic finite-action, synthetic infinite-action (ellipsoid), and
//!   MNIST pairwise-digit environments, with the regret oracle kept out of reach
//!   of the policies;
//! - [`policies`]: the shared-representation greedy policy on a doubling epoch
//!   schedule, its independent-task baseline, the explore-explore-then-commit
//!   policy for ellipsoid action sets, and the phased-exploration baseline;
//! - [`harness`]: declarative experiment configs, the round loop, regret
//!   accounting, sweeps, and CSV output.

pub mod envs;
pub mod error;
pub mod harness;
pub mod lowrank;
pub mod numerics;
pub mod policies;

pub use error::{Error, Result};
