//! Deterministic random sampling and dense linear-algebra primitives shared by
//! all other modules. All operations are pure functions of their inputs
//! (including any `Rng` passed in); nothing here holds shared mutable state.

mod linalg;
mod mat;
mod rng;
mod sampling;

pub use linalg::{least_squares, subspace_distance, top_k_eig};
pub use mat::{Mat, OrthonormalBasis};
pub use rng::Rng;
pub use sampling::{sample_gaussian, sample_haar_orthonormal, sample_sphere};

/// Dot product of two equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
