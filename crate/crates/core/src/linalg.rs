//! Dense row-major matrices and the few symmetric eigen routines the
//! pipeline needs (PSD checks, kernel PCA).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::math;

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Returns `None` when the length
    /// does not match `rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Returns `None` on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Option<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return None;
            }
            data.extend_from_slice(r);
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Single-column matrix.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
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
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col_iter(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in descending
/// order; `vectors[k]` is the unit eigenvector belonging to `values[k]`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Full symmetric eigen-decomposition (tridiagonalisation + implicit QR).
pub fn symmetric_eigen(a: &DMatrix<f64>) -> SymmetricEigen {
    let eig = nalgebra::linalg::SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    SymmetricEigen {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect(),
    }
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalue_range(a: &DMatrix<f64>) -> (f64, f64) {
    let values = nalgebra::linalg::SymmetricEigen::new(a.clone()).eigenvalues;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Rayleigh-quotient estimate of the largest eigenvalue of a symmetric PSD-ish
/// matrix by power iteration. The estimate never exceeds the true value.
pub fn power_iteration_max(a: &DMatrix<f64>, iterations: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = nalgebra::DVector::from_element(n, 1.0 / math::sqrt(n as f64));
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = a * &v;
        estimate = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    estimate
}

/// Top `m` eigenpairs of a symmetric PSD matrix by orthogonal (subspace)
/// iteration with Rayleigh-Ritz extraction. Used when a full decomposition
/// is too expensive.
pub fn top_eigenpairs(a: &DMatrix<f64>, m: usize, tol: f64, max_iter: usize) -> SymmetricEigen {
    let n = a.nrows();
    let m = m.min(n);
    let p = (m + 6).min(n);
    // deterministic, well-spread start basis
    let mut basis = DMatrix::from_fn(n, p, |i, j| {
        let h = crate::rng::splitmix64(((i as u64) << 20) ^ j as u64);
        (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    let mut previous: Vec<f64> = vec![f64::INFINITY; m];
    let mut ritz = SymmetricEigen {
        values: Vec::new(),
        vectors: Vec::new(),
    };
    for _ in 0..max_iter {
        let z = a * &basis;
        basis = z.qr().q();
        let small = basis.transpose() * a * &basis;
        let small_eig = symmetric_eigen(&small);
        let vectors = &basis * DMatrix::from_fn(p, p, |i, j| small_eig.vectors[j][i]);
        ritz = SymmetricEigen {
            values: small_eig.values[..m].to_vec(),
            vectors: (0..m)
                .map(|k| vectors.column(k).iter().copied().collect())
                .collect(),
        };
        let scale = ritz
            .values
            .first()
            .copied()
            .unwrap_or(0.0)
            .abs()
            .max(1e-300);
        let converged = ritz
            .values
            .iter()
            .zip(&previous)
            .all(|(v, p)| math::abs(v - p) <= tol * scale);
        previous.clone_from(&ritz.values);
        basis = vectors;
        if converged {
            break;
        }
    }
    ritz
}
