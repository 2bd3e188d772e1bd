//! Least squares, truncated symmetric eigendecomposition, and the principal-angle
//! distance between column spans.

use crate::error::{Error, Result};
use crate::numerics::{Mat, OrthonormalBasis};
use nalgebra::{DMatrix, DVector};

/// Minimize `‖X·w − y‖² + ridge·‖w‖²`.
///
/// Solved through an orthogonal decomposition (SVD), never normal equations:
/// with `ridge = 0` and a singular `XᵀX` this returns the minimum-norm solution.
pub fn least_squares(x: &Mat, y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let n = x.rows();
    let p = x.cols();
    if n == 0 || p == 0 {
        return Err(Error::invalid("least_squares: empty system"));
    }
    if y.len() != n {
        return Err(Error::invalid(format!(
            "least_squares: X has {n} rows but y has length {}",
            y.len()
        )));
    }
    if !x.is_finite() || !y.iter().all(|v| v.is_finite()) || !ridge.is_finite() || ridge < 0.0 {
        return Err(Error::invalid("least_squares: non-finite input"));
    }

    // Ridge as extra rows √ridge·I keeps the solve on the orthogonal path.
    let (design, rhs) = if ridge > 0.0 {
        let s = ridge.sqrt();
        let mut m = DMatrix::zeros(n + p, p);
        for i in 0..n {
            for j in 0..p {
                m[(i, j)] = x.at(i, j);
            }
        }
        for j in 0..p {
            m[(n + j, j)] = s;
        }
        let mut b = DVector::zeros(n + p);
        for i in 0..n {
            b[i] = y[i];
        }
        (m, b)
    } else {
        (x.to_na(), DVector::from_column_slice(y))
    };

    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    // Rank cutoff in the spirit of LAPACK's gelsd default.
    let eps = max_sv * f64::EPSILON * (design.nrows().max(p) as f64);
    let sol = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::numerical(format!("least_squares SVD solve failed: {e}")))?;
    Ok(sol.iter().cloned().collect())
}

/// Top-`k` eigenpairs of a symmetric matrix, eigenvalues sorted descending by
/// value. Ties make the eigenvectors non-identifiable; compare results through
/// [`subspace_distance`], not columnwise.
pub fn top_k_eig(sym: &Mat, k: usize) -> Result<(OrthonormalBasis, Vec<f64>)> {
    let d = sym.rows();
    if d == 0 || sym.cols() != d {
        return Err(Error::invalid("top_k_eig: matrix must be square"));
    }
    if k == 0 || k > d {
        return Err(Error::invalid(format!(
            "top_k_eig: need 1 <= k <= d, got k = {k}"
        )));
    }
    if !sym.is_finite() {
        return Err(Error::invalid("top_k_eig: non-finite entries"));
    }
    let scale = sym.max_abs().max(1.0);
    let mut max_asym = 0.0_f64;
    for i in 0..d {
        for j in (i + 1)..d {
            max_asym = max_asym.max((sym.at(i, j) - sym.at(j, i)).abs());
        }
    }
    if max_asym > 1e-8 * scale {
        return Err(Error::invalid(format!(
            "top_k_eig: input is asymmetric by {max_asym:e}"
        )));
    }

    // Symmetrize before factorizing so the tolerance-level asymmetry cannot leak.
    let sym_na = {
        let m = sym.to_na();
        (&m + m.transpose()) * 0.5
    };
    let eig = sym_na.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });

    let basis = Mat::from_fn(d, k, |i, j| eig.eigenvectors[(i, order[j])]);
    let values: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok((OrthonormalBasis::new(basis)?, values))
}

/// Distance between the column spans of two `d×k` orthonormal bases:
/// the operator norm `‖(I − B1·B1ᵀ)·B2‖`, i.e. the sine of the largest
/// principal angle. Zero iff the spans coincide; symmetric in its arguments.
pub fn subspace_distance(b1: &OrthonormalBasis, b2: &OrthonormalBasis) -> Result<f64> {
    if b1.dim() != b2.dim() || b1.rank() != b2.rank() {
        return Err(Error::invalid(format!(
            "subspace_distance: shapes {}x{} vs {}x{}",
            b1.dim(),
            b1.rank(),
            b2.dim(),
            b2.rank()
        )));
    }
    // (I − B1·B1ᵀ)·B2 = B2 − B1·(B1ᵀ·B2), computed without forming the projector.
    let cross = b1.mat().tr_mul(b2.mat()); // k×k
    let back = b1.mat().matmul(&cross); // d×k
    let mut resid = b2.mat().clone();
    for i in 0..resid.rows() {
        for j in 0..resid.cols() {
            let v = resid.at(i, j) - back.at(i, j);
            resid.set(i, j, v);
        }
    }
    Ok(resid.op_norm().clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dot, norm, sample_haar_orthonormal, Rng};

    #[test]
    fn identity_design_returns_rhs() {
        let x = Mat::identity(2);
        let w = least_squares(&x, &[3.0, 5.0], 0.0).unwrap();
        assert!((w[0] - 3.0).abs() < 1e-12);
        assert!((w[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn column_of_ones_gives_sample_mean() {
        let x = Mat::from_row_major(3, 1, vec![1.0, 1.0, 1.0]).unwrap();
        let w = least_squares(&x, &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_returns_minimum_norm_solution() {
        // Solutions satisfy w1 + w2 = 2; the minimum-norm one is (1, 1).
        let x = Mat::from_row_major(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let w = least_squares(&x, &[2.0, 2.0], 0.0).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-10, "w = {w:?}");
        assert!((w[1] - 1.0).abs() < 1e-10, "w = {w:?}");

        // Cross-check against the pseudo-inverse computed from the SVD directly.
        let pinv = x.to_na().pseudo_inverse(1e-12).unwrap();
        let expect = pinv * nalgebra::DVector::from_column_slice(&[2.0, 2.0]);
        assert!((w[0] - expect[0]).abs() < 1e-10);
        assert!((w[1] - expect[1]).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_finite_input() {
        let x = Mat::identity(2);
        assert!(least_squares(&x, &[f64::NAN, 0.0], 0.0).is_err());
        assert!(least_squares(&x, &[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn gradient_vanishes_at_solution() {
        // 2Xᵀ(Xw−y) + 2·ridge·w must be numerically zero at the minimizer.
        let mut rng = Rng::new(4);
        for trial in 0..20 {
            let n = 12;
            let p = 4;
            let ridge = if trial % 2 == 0 { 0.0 } else { 1e-3 };
            let x = Mat::from_fn(n, p, |_, _| rng.standard_normal());
            let y: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let w = least_squares(&x, &y, ridge).unwrap();
            let pred = x.mul_vec(&w);
            let resid: Vec<f64> = pred.iter().zip(&y).map(|(p, yi)| p - yi).collect();
            let mut grad = x.tr_mul_vec(&resid);
            for (g, wi) in grad.iter_mut().zip(&w) {
                *g = 2.0 * *g + 2.0 * ridge * wi;
            }
            let bound = 1e-8 * (x.op_norm() * norm(&y) + 1.0);
            assert!(
                norm(&grad) <= bound,
                "gradient norm {} > {bound}",
                norm(&grad)
            );
        }
    }

    #[test]
    fn top_k_of_diagonal() {
        let sym =
            Mat::from_row_major(3, 3, vec![3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let (basis, vals) = top_k_eig(&sym, 2).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-10);
        assert!((vals[1] - 2.0).abs() < 1e-10);
        // Span must be {e1, e2}: distance to that span is zero.
        let target = OrthonormalBasis::new(
            Mat::from_row_major(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert!(subspace_distance(&basis, &target).unwrap() < 1e-10);
    }

    #[test]
    fn identity_matrix_degenerate_top_eigenpair() {
        let (basis, vals) = top_k_eig(&Mat::identity(4), 1).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-10);
        assert!((norm(&basis.col(0)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rank_one_spike_recovers_direction() {
        // 2·θθᵀ + I with θ = e1 has top eigenpair (3, ±e1).
        let d = 4;
        let mut sym = Mat::identity(d);
        sym.set(0, 0, 3.0);
        let (basis, vals) = top_k_eig(&sym, 1).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-10);
        assert!((basis.col(0)[0].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = Mat::from_row_major(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(top_k_eig(&m, 1).is_err());
    }

    #[test]
    fn eigen_residual_and_reconstruction() {
        let mut rng = Rng::new(8);
        for _ in 0..10 {
            let d = 6;
            let k = 2;
            // Random PSD matrix of exact rank k.
            let b = sample_haar_orthonormal(d, k, &mut rng).unwrap();
            let mut sym = Mat::zeros(d, d);
            for j in 0..k {
                let c = b.col(j);
                sym.add_scaled_outer((j + 1) as f64, &c, &c);
            }
            let (basis, vals) = top_k_eig(&sym, k).unwrap();
            let op = sym.op_norm();
            for (j, val) in vals.iter().enumerate() {
                let v = basis.col(j);
                let av = sym.mul_vec(&v);
                let resid: Vec<f64> = av.iter().zip(&v).map(|(a, vi)| a - val * vi).collect();
                assert!(norm(&resid) <= 1e-8 * op.max(1.0));
            }
            // Reconstruction captures everything: the matrix has rank exactly k.
            let mut recon = Mat::zeros(d, d);
            for (j, val) in vals.iter().enumerate() {
                let v = basis.col(j);
                recon.add_scaled_outer(*val, &v, &v);
            }
            let mut diff = sym.clone();
            for i in 0..d {
                for j in 0..d {
                    diff.set(i, j, diff.at(i, j) - recon.at(i, j));
                }
            }
            assert!(diff.op_norm() <= 1e-8);
        }
    }

    #[test]
    fn subspace_distance_examples() {
        let e1 = OrthonormalBasis::new(Mat::from_row_major(2, 1, vec![1.0, 0.0]).unwrap()).unwrap();
        let e2 = OrthonormalBasis::new(Mat::from_row_major(2, 1, vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(subspace_distance(&e1, &e1).unwrap(), 0.0);
        assert!((subspace_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-12);

        let phi = 0.3_f64;
        let rot =
            OrthonormalBasis::new(Mat::from_row_major(2, 1, vec![phi.cos(), phi.sin()]).unwrap())
                .unwrap();
        assert!((subspace_distance(&e1, &rot).unwrap() - phi.sin().abs()).abs() < 1e-10);
    }

    #[test]
    fn subspace_distance_is_a_pseudo_metric() {
        let mut rng = Rng::new(13);
        for _ in 0..25 {
            let d = 5;
            let k = 2;
            let a = sample_haar_orthonormal(d, k, &mut rng).unwrap();
            let b = sample_haar_orthonormal(d, k, &mut rng).unwrap();
            let c = sample_haar_orthonormal(d, k, &mut rng).unwrap();
            let ab = subspace_distance(&a, &b).unwrap();
            let ba = subspace_distance(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-8, "symmetry violated: {ab} vs {ba}");
            let ac = subspace_distance(&a, &c).unwrap();
            let cb = subspace_distance(&c, &b).unwrap();
            assert!(
                ab <= ac + cb + 1e-8,
                "triangle violated: {ab} > {ac} + {cb}"
            );
        }
    }

    #[test]
    fn subspace_distance_dimension_mismatch() {
        let mut rng = Rng::new(1);
        let a = sample_haar_orthonormal(4, 2, &mut rng).unwrap();
        let b = sample_haar_orthonormal(4, 1, &mut rng).unwrap();
        assert!(subspace_distance(&a, &b).is_err());
    }

    #[test]
    fn least_squares_determinism() {
        let mut rng = Rng::new(99);
        let x = Mat::from_fn(8, 3, |_, _| rng.standard_normal());
        let y: Vec<f64> = (0..8).map(|_| rng.standard_normal()).collect();
        let a = least_squares(&x, &y, 0.5).unwrap();
        let b = least_squares(&x, &y, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dot_sanity() {
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
    }
}
