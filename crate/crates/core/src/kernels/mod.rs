//! Graph kernels and Gram matrices.
//!
//! * [`spgk`]: shortest-path kernel. Each graph becomes the multiset of its
//!   connected node pairs keyed by `(hop distance, sorted endpoint labels)`;
//!   the raw kernel counts matching pairs and is normalised to unit diagonal.
//! * [`nhgk`]: neighborhood-hash kernel. Cell labels are hashed to `bits`-wide
//!   words; each iteration replaces a node label with `rotl1(own) ^ xor(nbrs)`
//!   and the per-iteration common-label counts are averaged as
//!   `c / (|V| + |V'| - c)`.
//!
//! [`KernelMatrix`] carries the Gram values together with the kernel
//! configuration and the outcome of its positive semi-definiteness check.

mod neighborhood_hash;
mod shortest_path;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::SceneGraph;
use crate::linalg::{self, Matrix};

pub use neighborhood_hash::{nhgk, HashedLabels, NhgkParams};
pub use shortest_path::{shortest_paths, spgk, PathFeatures, ShortestPathGraph};

/// Relative tolerance of the PSD check: `min eig >= -PSD_TOL * max eig`.
pub const PSD_TOL: f64 = 1e-8;
/// Symmetry tolerance of a Gram matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Above this many distinct rows the PSD check switches from a full eigen
/// decomposition to a shifted Cholesky factorisation.
pub const DENSE_PSD_LIMIT: usize = 1200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("a Gram matrix needs at least two items, got {0}")]
    TooFewItems(usize),
    #[error("invalid kernel parameter: {0}")]
    Parameter(&'static str),
    #[error("matrix shape mismatch: {0}")]
    Shape(&'static str),
    #[error("matrix not symmetric at ({i}, {j}): {a} vs {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("non-finite kernel value at ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("Gram matrix is not positive semi-definite: eigenvalue {min_eigenvalue} vs largest {max_eigenvalue}")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum KernelConfig {
    Spgk {
        #[serde(default = "yes")]
        normalize: bool,
    },
    Nhgk(NhgkParams),
    /// Dot product of normalised feature vectors.
    Linear,
}

fn yes() -> bool {
    true
}

impl KernelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            KernelConfig::Spgk { .. } => "spgk",
            KernelConfig::Nhgk(_) => "nhgk",
            KernelConfig::Linear => "linear",
        }
    }
}

/// Kernel value of two graphs under `config`.
pub fn graph_kernel(
    g1: &SceneGraph,
    g2: &SceneGraph,
    config: &KernelConfig,
) -> Result<f64, KernelError> {
    match config {
        KernelConfig::Spgk { normalize } => Ok(spgk(g1, g2, *normalize)),
        KernelConfig::Nhgk(p) => {
            p.validate().map_err(KernelError::Parameter)?;
            Ok(nhgk(g1, g2, p))
        }
        KernelConfig::Linear => Err(KernelError::Parameter(
            "the linear kernel applies to feature vectors, not graphs",
        )),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdMethod {
    /// Full eigen-decomposition of the de-duplicated matrix.
    DenseEigen,
    /// Cholesky factorisation of the de-duplicated matrix shifted by
    /// `PSD_TOL * max eigenvalue`.
    ShiftedCholesky,
    /// Eigenvalues of the feature covariance (linear kernels).
    FeatureGram,
}

/// Outcome of a successful PSD check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub method: PsdMethod,
    /// Exact smallest eigenvalue when the method yields it.
    pub min_eigenvalue: Option<f64>,
    pub max_eigenvalue: f64,
    pub distinct_rows: usize,
    /// True when the report was carried over from a parent matrix of which
    /// this one is a principal submatrix.
    #[serde(default)]
    pub inherited: bool,
}

/// Symmetric Gram matrix with its kernel configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
    pub config: KernelConfig,
    pub psd: Option<PsdReport>,
}

impl KernelMatrix {
    /// Wraps row-major values after checking shape, finiteness and symmetry.
    pub fn new(n: usize, values: Vec<f64>, config: KernelConfig) -> Result<Self, KernelError> {
        if values.len() != n * n {
            return Err(KernelError::Shape("value count must be n * n"));
        }
        let m = Self {
            n,
            values,
            config,
            psd: None,
        };
        m.check_symmetry()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn check_symmetry(&self) -> Result<(), KernelError> {
        for i in 0..self.n {
            for j in i..self.n {
                let (a, b) = (self.get(i, j), self.get(j, i));
                if !a.is_finite() {
                    return Err(KernelError::NonFinite { i, j });
                }
                if crate::math::abs(a - b) > SYMMETRY_TOL {
                    return Err(KernelError::NotSymmetric { i, j, a, b });
                }
            }
        }
        Ok(())
    }

    /// Principal submatrix on `indices`; a PSD report carries over.
    pub fn principal(&self, indices: &[usize]) -> KernelMatrix {
        let m = indices.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in indices {
            let row = self.row(i);
            values.extend(indices.iter().map(|&j| row[j]));
        }
        KernelMatrix {
            n: m,
            values,
            config: self.config.clone(),
            psd: self.psd.clone().map(|r| PsdReport {
                inherited: true,
                ..r
            }),
        }
    }

    /// Row `i` restricted to the columns `cols`.
    pub fn row_subset(&self, i: usize, cols: &[usize]) -> Vec<f64> {
        let row = self.row(i);
        cols.iter().map(|&j| row[j]).collect()
    }

    /// Runs the PSD check (once) and records the report.
    pub fn check_psd(&mut self) -> Result<&PsdReport, KernelError> {
        if self.psd.is_none() {
            self.psd = Some(psd_check(self)?);
        }
        Ok(self.psd.as_ref().expect("just set"))
    }

    /// Linear-kernel Gram of feature rows; PSD by construction, verified
    /// through the (small) feature Gram `X^T X`.
    pub fn linear(features: &Matrix) -> Result<Self, KernelError> {
        let n = features.rows();
        if n < 2 {
            return Err(KernelError::TooFewItems(n));
        }
        if !features.is_finite() {
            return Err(KernelError::Parameter("non-finite feature value"));
        }
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = features
                    .row(i)
                    .iter()
                    .zip(features.row(j))
                    .map(|(a, b)| a * b)
                    .sum();
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        let x = features.to_dmatrix();
        let (min, max) = linalg::symmetric_eigenvalue_range(&(x.transpose() * &x));
        let min_eigenvalue = if n > features.cols() {
            0.0f64.min(min)
        } else {
            min
        };
        if min_eigenvalue < -PSD_TOL * max.max(0.0) {
            return Err(KernelError::NotPsd {
                min_eigenvalue,
                max_eigenvalue: max,
            });
        }
        Ok(Self {
            n,
            values,
            config: KernelConfig::Linear,
            psd: Some(PsdReport {
                method: PsdMethod::FeatureGram,
                min_eigenvalue: Some(min_eigenvalue),
                max_eigenvalue: max,
                distinct_rows: n,
                inherited: false,
            }),
        })
    }
}

/// Groups exactly identical rows; returns representatives and multiplicities.
fn distinct_rows(k: &KernelMatrix) -> (Vec<usize>, Vec<usize>) {
    let n = k.n();
    let mut order: Vec<usize> = (0..n).collect();
    let cmp_rows = |a: &usize, b: &usize| {
        k.row(*a)
            .iter()
            .zip(k.row(*b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    };
    order.sort_by(cmp_rows);
    let mut reps: Vec<usize> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for &i in &order {
        match reps.last() {
            Some(r) if cmp_rows(r, &i).is_eq() => *counts.last_mut().expect("paired") += 1,
            _ => {
                reps.push(i);
                counts.push(1);
            }
        }
    }
    (reps, counts)
}

/// PSD check of a symmetric matrix.
///
/// Identical rows are collapsed first: with `K = P K_r P^T` for the row
/// indicator `P`, the nonzero spectrum of `K` equals that of
/// `D^1/2 K_r D^1/2` (`D` the multiplicities), which is what gets checked.
pub fn psd_check(k: &KernelMatrix) -> Result<PsdReport, KernelError> {
    psd_check_with_limit(k, DENSE_PSD_LIMIT)
}

fn psd_check_with_limit(k: &KernelMatrix, dense_limit: usize) -> Result<PsdReport, KernelError> {
    let (reps, counts) = distinct_rows(k);
    let m = reps.len();
    let scaled = DMatrix::from_fn(m, m, |a, b| {
        k.get(reps[a], reps[b]) * crate::math::sqrt((counts[a] * counts[b]) as f64)
    });
    let dense = |scaled: &DMatrix<f64>| {
        let (min, max) = linalg::symmetric_eigenvalue_range(scaled);
        // collapsed rows contribute zero eigenvalues when n > m
        let min = if k.n() > m { min.min(0.0) } else { min };
        (min, max)
    };
    if m <= dense_limit {
        let (min, max) = dense(&scaled);
        if min < -PSD_TOL * max.max(0.0) {
            return Err(KernelError::NotPsd {
                min_eigenvalue: min,
                max_eigenvalue: max,
            });
        }
        return Ok(PsdReport {
            method: PsdMethod::DenseEigen,
            min_eigenvalue: Some(min),
            max_eigenvalue: max,
            distinct_rows: m,
            inherited: false,
        });
    }
    // power iteration never overestimates, so the shift is conservative
    let max_estimate = linalg::power_iteration_max(&scaled, 200).max(0.0);
    let shift = PSD_TOL * max_estimate;
    let shifted = &scaled + DMatrix::identity(m, m) * shift;
    if nalgebra::linalg::Cholesky::new(shifted).is_none() {
        let (min, max) = dense(&scaled);
        return Err(KernelError::NotPsd {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok(PsdReport {
        method: PsdMethod::ShiftedCholesky,
        min_eigenvalue: None,
        max_eigenvalue: max_estimate,
        distinct_rows: m,
        inherited: false,
    })
}

/// Precomputed per-graph representation for fast pairwise evaluation.
enum Prepared {
    Paths(Vec<PathFeatures>, bool),
    Hashes(Vec<HashedLabels>),
}

impl Prepared {
    fn new(graphs: &[SceneGraph], config: &KernelConfig) -> Result<Self, KernelError> {
        match config {
            KernelConfig::Spgk { normalize } => Ok(Prepared::Paths(
                graphs.iter().map(PathFeatures::from_graph).collect(),
                *normalize,
            )),
            KernelConfig::Nhgk(p) => {
                p.validate().map_err(KernelError::Parameter)?;
                Ok(Prepared::Hashes(
                    graphs
                        .iter()
                        .map(|g| HashedLabels::from_graph(g, p))
                        .collect(),
                ))
            }
            KernelConfig::Linear => Err(KernelError::Parameter(
                "the linear kernel applies to feature vectors, not graphs",
            )),
        }
    }

    fn eval(&self, i: usize, j: usize) -> f64 {
        match self {
            Prepared::Paths(f, normalize) => f[i].kernel(&f[j], *normalize),
            Prepared::Hashes(h) => h[i].kernel(&h[j]),
        }
    }
}

/// Gram matrix of a graph collection without the PSD check.
pub fn gram_values(
    graphs: &[SceneGraph],
    config: &KernelConfig,
) -> Result<KernelMatrix, KernelError> {
    let n = graphs.len();
    if n < 2 {
        return Err(KernelError::TooFewItems(n));
    }
    let prepared = Prepared::new(graphs, config)?;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = prepared.eval(i, j);
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    KernelMatrix::new(n, values, config.clone())
}

/// Gram matrix of a graph collection; each unordered pair is evaluated once
/// and the PSD check is recorded in the result.
pub fn gram_matrix(
    graphs: &[SceneGraph],
    config: &KernelConfig,
) -> Result<KernelMatrix, KernelError> {
    let mut k = gram_values(graphs, config)?;
    k.check_psd()?;
    Ok(k)
}

#[cfg(test)]
mod tests;
