//! Dense matrices in row-major order, plus the column-orthonormal wrapper used
//! for feature extractors. Decompositions are delegated to nalgebra; the hot
//! accumulation loops stay on plain slices.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a row-major entry vector. Errors on length mismatch or
    /// non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Stack column vectors side by side.
    pub fn from_cols(cols: &[Vec<f64>]) -> Result<Self> {
        let k = cols.len();
        if k == 0 {
            return Err(Error::invalid("from_cols needs at least one column"));
        }
        let d = cols[0].len();
        if cols.iter().any(|c| c.len() != d) {
            return Err(Error::invalid("from_cols: ragged columns"));
        }
        Ok(Mat::from_fn(d, k, |i, j| cols[j][i]))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.at(j, i))
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (l, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let other_row = other.row(l);
                for (j, &b) in other_row.iter().enumerate() {
                    out_row[j] += a * b;
                }
            }
        }
        out
    }

    /// `self · x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "mul_vec dimension mismatch");
        (0..self.rows).map(|i| super::dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "tr_mul_vec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, &a) in self.row(i).iter().enumerate() {
                out[j] += a * xi;
            }
        }
        out
    }

    /// `selfᵀ · other`.
    pub fn tr_mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "tr_mul dimension mismatch");
        let mut out = Mat::zeros(self.cols, other.cols);
        for l in 0..self.rows {
            let a_row = self.row(l);
            let b_row = other.row(l);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (j, &b) in b_row.iter().enumerate() {
                    out_row[j] += a * b;
                }
            }
        }
        out
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// `self += c · x·yᵀ`.
    pub fn add_scaled_outer(&mut self, c: f64, x: &[f64], y: &[f64]) {
        assert_eq!(self.rows, x.len());
        assert_eq!(self.cols, y.len());
        for (i, &xi) in x.iter().enumerate() {
            let w = c * xi;
            if w == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (j, &yj) in y.iter().enumerate() {
                row[j] += w * yj;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Operator (spectral) norm via SVD. Intended for tests and validation, not
    /// hot paths.
    pub fn op_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let svd = self.to_na().svd(false, false);
        svd.singular_values.iter().cloned().fold(0.0, f64::max)
    }

    pub(crate) fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_na(m: &DMatrix<f64>) -> Mat {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

const ORTHONORMALITY_TOL: f64 = 1e-10;

/// A `d×k` matrix with orthonormal columns (`matᵀ·mat = I_k` within 1e-10).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    mat: Mat,
}

impl OrthonormalBasis {
    pub fn new(mat: Mat) -> Result<Self> {
        let gram = mat.tr_mul(&mat);
        let k = mat.cols();
        for i in 0..k {
            for j in 0..k {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (gram.at(i, j) - expect).abs() > ORTHONORMALITY_TOL {
                    return Err(Error::invalid(format!(
                        "columns are not orthonormal: gram[{i},{j}] = {}",
                        gram.at(i, j)
                    )));
                }
            }
        }
        Ok(OrthonormalBasis { mat })
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    /// Number of columns `k`.
    pub fn rank(&self) -> usize {
        self.mat.cols()
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        self.mat.col(j)
    }

    /// Single unit column from a vector (normalized). Errors on a zero vector.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        let n = super::norm(v);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("cannot build a basis from a zero vector"));
        }
        let col: Vec<f64> = v.iter().map(|x| x / n).collect();
        OrthonormalBasis::new(Mat::from_cols(&[col])?)
    }
}
