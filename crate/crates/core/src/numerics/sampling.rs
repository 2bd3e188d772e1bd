//! Samplers: uniform sphere points, Gaussian context vectors, and Haar-random
//! orthonormal bases.

use crate::error::{Error, Result};
use crate::numerics::{norm, Mat, OrthonormalBasis, Rng};

/// Uniform draw from the sphere of the given radius in `R^dim`.
///
/// The returned vector has Euclidean norm `radius` (renormalized Gaussian, so
/// the direction is rotation-invariant).
pub fn sample_sphere(dim: usize, radius: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::invalid("sample_sphere: dim must be at least 1"));
    }
    if radius <= 0.0 || radius.is_nan() || radius.is_infinite() {
        return Err(Error::invalid("sample_sphere: radius must be positive"));
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let n = norm(&v);
        // A zero draw has probability zero; resample rather than divide by it.
        if n > 1e-300 {
            return Ok(v.iter().map(|x| x * radius / n).collect());
        }
    }
}

/// Draw `mean + cov_chol · z` with `z` a vector of independent standard normals.
pub fn sample_gaussian(mean: &[f64], cov_chol: &Mat, rng: &mut Rng) -> Result<Vec<f64>> {
    let d = mean.len();
    if cov_chol.rows() != d || cov_chol.cols() != d {
        return Err(Error::invalid(format!(
            "sample_gaussian: cov_chol is {}x{}, mean has length {d}",
            cov_chol.rows(),
            cov_chol.cols()
        )));
    }
    let z: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let mut out = cov_chol.mul_vec(&z);
    for (o, m) in out.iter_mut().zip(mean) {
        *o += m;
    }
    Ok(out)
}

/// Haar-distributed `d×k` orthonormal basis.
///
/// QR of a standard-Gaussian matrix, with each column sign-fixed so the R
/// factor has a positive diagonal; that correction is what makes the Q factor
/// Haar rather than merely orthonormal.
pub fn sample_haar_orthonormal(d: usize, k: usize, rng: &mut Rng) -> Result<OrthonormalBasis> {
    if k == 0 || d == 0 {
        return Err(Error::invalid(
            "sample_haar_orthonormal: dimensions must be positive",
        ));
    }
    if k > d {
        return Err(Error::invalid(format!(
            "sample_haar_orthonormal: k = {k} exceeds d = {d}"
        )));
    }
    let g = Mat::from_fn(d, k, |_, _| rng.standard_normal());
    let qr = g.to_na().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    OrthonormalBasis::new(Mat::from_na(&q))
}
