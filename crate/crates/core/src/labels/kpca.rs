use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::LabelError;
use crate::linalg::{self, Matrix};
use crate::math;

/// Above this many points the leading eigenpairs come from subspace
/// iteration instead of a full decomposition.
const DENSE_LIMIT: usize = 1200;
/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpcaProjection {
    /// `n x m` projected coordinates.
    pub scores: Matrix,
    pub gamma: f64,
    /// Leading eigenvalues of the centred kernel, one per component.
    pub eigenvalues: Vec<f64>,
    /// Share of the centred-kernel trace carried by the kept components.
    pub retained: f64,
}

/// `1 / (2 median^2)` over all pairwise distances; 1 when the median is 0.
pub fn median_gamma(points: &Matrix) -> f64 {
    let n = points.rows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(math::euclidean(points.row(i), points.row(j)));
        }
    }
    match math::median(&d) {
        Some(m) if m > 0.0 => 1.0 / (2.0 * m * m),
        _ => 1.0,
    }
}

/// Double-centred RBF kernel `K_c = H K H` with `H = I - 11^T / n`.
pub fn centered_rbf(points: &Matrix, gamma: f64) -> DMatrix<f64> {
    let n = points.rows();
    let mut k = DMatrix::from_fn(n, n, |i, j| {
        math::exp(-gamma * math::squared_distance(points.row(i), points.row(j)))
    });
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] += grand - row_means[i] - row_means[j];
        }
    }
    k
}

/// Kernel PCA with an RBF kernel. Eigenvectors `v_k` of the centred kernel
/// are scaled to `alpha_k = v_k / sqrt(lambda_k)`, so the training scores
/// `K_c alpha_k` equal `sqrt(lambda_k) v_k`. `gamma = None` uses the median
/// heuristic. Components beyond the kernel rank are dropped with a warning.
pub fn kpca_project(
    points: &Matrix,
    gamma: Option<f64>,
    m: usize,
) -> Result<KpcaProjection, LabelError> {
    let n = points.rows();
    if n < 2 {
        return Err(LabelError::TooFewPoints { needed: 2, got: n });
    }
    if m == 0 {
        return Err(LabelError::Parameter("at least one component required"));
    }
    if !points.is_finite() {
        return Err(LabelError::NonFinite);
    }
    let gamma = gamma.unwrap_or_else(|| median_gamma(points));
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(LabelError::Parameter("gamma must be positive"));
    }
    let kc = centered_rbf(points, gamma);
    let trace = kc.trace();
    let eig = if n <= DENSE_LIMIT {
        linalg::symmetric_eigen(&kc)
    } else {
        linalg::top_eigenpairs(&kc, m.min(n), 1e-10, 500)
    };
    let top = eig.values.first().copied().unwrap_or(0.0);
    let rank = eig
        .values
        .iter()
        .take_while(|&&v| v > RANK_TOL * top.max(0.0) && v > 0.0)
        .count();
    let kept = m.min(rank);
    if kept < m {
        log::warn!("kernel PCA: {m} components requested but the centred kernel has rank {rank}");
    }
    let cols = kept.max(1);
    let mut scores = Matrix::zeros(n, cols);
    for c in 0..kept {
        let s = math::sqrt(eig.values[c]);
        // fix the sign so the largest-magnitude entry is positive
        let v = &eig.vectors[c];
        let pivot = v.iter().copied().fold(
            0.0f64,
            |a, x| if math::abs(x) > math::abs(a) { x } else { a },
        );
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            scores.set(i, c, sign * s * v[i]);
        }
    }
    let eigenvalues: Vec<f64> = eig.values.iter().take(kept).copied().collect();
    let retained = if trace > 0.0 {
        eigenvalues.iter().sum::<f64>() / trace
    } else {
        0.0
    };
    Ok(KpcaProjection {
        scores,
        gamma,
        eigenvalues,
        retained,
    })
}
