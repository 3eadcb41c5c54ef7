use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LabelError;
use crate::linalg::Matrix;
use crate::math::{self, squared_distance};
use crate::rng::{self, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansParams {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
        }
    }
}

/// Outcome of a single seeded Lloyd run.
#[derive(Clone, Debug, PartialEq)]
pub struct LloydRun {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    /// RSS after every iteration; non-increasing.
    pub history: Vec<f64>,
    pub converged: bool,
}

impl LloydRun {
    pub fn rss(&self) -> f64 {
        self.history.last().copied().unwrap_or(0.0)
    }
}

/// Final clustering of a point set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub rss: f64,
    /// Mean silhouette; absent for a single cluster.
    pub silhouette: Option<f64>,
    pub seed: u64,
    /// Restart that produced the result.
    pub restart: usize,
}

fn check_points(points: &Matrix, k: usize) -> Result<(), LabelError> {
    if k == 0 {
        return Err(LabelError::Parameter("k must be at least 1"));
    }
    if points.rows() < k {
        return Err(LabelError::TooFewPoints {
            needed: k,
            got: points.rows(),
        });
    }
    if points.cols() == 0 {
        return Err(LabelError::Parameter("points need at least one dimension"));
    }
    if !points.is_finite() {
        return Err(LabelError::NonFinite);
    }
    Ok(())
}

/// k-means++ seeding: first centre uniform, then proportional to the squared
/// distance to the nearest chosen centre.
fn plus_plus(points: &Matrix, k: usize, rng: &mut SeededRng) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng::uniform(rng, 0.0, total);
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave the target unreached; fall back to the last
            // point with positive weight
            chosen.unwrap_or_else(|| {
                nearest
                    .iter()
                    .rposition(|&d| d > 0.0)
                    .expect("positive total")
            })
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(pick)));
        }
    }
    centroids
}

fn nearest_centroid(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, squared_distance(x, centroids.row(0)));
    for c in 1..centroids.rows() {
        let d = squared_distance(x, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn update_means(points: &Matrix, assignments: &[usize], centroids: &mut Matrix) -> Vec<usize> {
    let k = centroids.rows();
    let mut counts = vec![0usize; k];
    let mut sums = Matrix::zeros(k, points.cols());
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, x) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = counts[c] as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s / inv;
            }
        }
    }
    counts
}

/// Moves the point farthest from its centroid (taken from a cluster that can
/// spare one) into each empty cluster.
fn reseed_empty(
    points: &Matrix,
    assignments: &mut [usize],
    centroids: &mut Matrix,
    counts: &mut Vec<usize>,
) {
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let far = (0..points.rows())
            .filter(|&i| counts[assignments[i]] > 1)
            .map(|i| {
                (
                    i,
                    squared_distance(points.row(i), centroids.row(assignments[i])),
                )
            })
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .expect("k <= n guarantees a donor cluster")
            .0;
        assignments[far] = empty;
        *counts = update_means(points, assignments, centroids);
        centroids.row_mut(empty).copy_from_slice(points.row(far));
    }
}

/// One Lloyd run from a k-means++ start.
pub fn lloyd_run(
    points: &Matrix,
    k: usize,
    rng: &mut SeededRng,
    max_iter: usize,
) -> Result<LloydRun, LabelError> {
    check_points(points, k)?;
    let n = points.rows();
    let mut centroids = plus_plus(points, k, rng);
    let mut assignments: Vec<usize> = (0..n)
        .map(|i| nearest_centroid(points.row(i), &centroids).0)
        .collect();
    let mut history = Vec::new();
    let mut converged = false;
    for iter in 0..max_iter {
        if iter > 0 {
            let mut changed = false;
            for i in 0..n {
                let current = squared_distance(points.row(i), centroids.row(assignments[i]));
                let (c, d) = nearest_centroid(points.row(i), &centroids);
                // switch only on strict improvement, keeping ties stable
                if d < current {
                    assignments[i] = c;
                    changed = true;
                }
            }
            if !changed {
                converged = true;
                break;
            }
        }
        let mut counts = update_means(points, &assignments, &mut centroids);
        reseed_empty(points, &mut assignments, &mut centroids, &mut counts);
        history.push(rss(points, &assignments, &centroids));
    }
    Ok(LloydRun {
        assignments,
        centroids,
        history,
        converged,
    })
}

/// `sum_k sum_{x in C_k} |x - mu_k|^2`.
pub fn rss(points: &Matrix, assignments: &[usize], centroids: &Matrix) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| squared_distance(points.row(i), centroids.row(a)))
        .sum()
}

/// Best of `params.restarts` seeded Lloyd runs; restart `r` draws from
/// stream `r` of `seed`. Ties in RSS keep the earliest restart.
pub fn kmeans_with(
    points: &Matrix,
    k: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<ClusteringResult, LabelError> {
    check_points(points, k)?;
    if params.restarts == 0 || params.max_iter == 0 {
        return Err(LabelError::Parameter(
            "restarts and max_iter must be positive",
        ));
    }
    let mut best: Option<(usize, LloydRun)> = None;
    for r in 0..params.restarts {
        let mut rng = rng::seeded(seed, r as u64);
        let run = lloyd_run(points, k, &mut rng, params.max_iter)?;
        if !run.converged {
            log::debug!("k-means restart {r} stopped at the iteration cap");
        }
        if best.as_ref().is_none_or(|(_, b)| run.rss() < b.rss()) {
            best = Some((r, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");
    let silhouette = if k >= 2 {
        Some(silhouette(points, &run.assignments)?.mean)
    } else {
        None
    };
    Ok(ClusteringResult {
        k,
        rss: run.rss(),
        assignments: run.assignments,
        centroids: run.centroids,
        silhouette,
        seed,
        restart,
    })
}

pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<ClusteringResult, LabelError> {
    kmeans_with(points, k, seed, &KMeansParams::default())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Silhouette {
    pub values: Vec<f64>,
    pub mean: f64,
}

/// Per-point silhouette `(b - a) / max(a, b)` with `a` the mean distance to
/// the rest of the own cluster and `b` the smallest mean distance to another
/// cluster. Points of singleton clusters score 0.
pub fn silhouette(points: &Matrix, assignments: &[usize]) -> Result<Silhouette, LabelError> {
    let n = points.rows();
    if assignments.len() != n {
        return Err(LabelError::Shape("one assignment per point required"));
    }
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(LabelError::SingleCluster);
    }
    let mut values = Vec::with_capacity(n);
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += math::euclidean(points.row(i), points.row(j));
            }
        }
        let own = assignments[i];
        if sizes[own] == 1 {
            values.push(0.0);
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        values.push(if denom > 0.0 { (b - a) / denom } else { 0.0 });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    Ok(Silhouette { values, mean })
}

/// RSS and silhouette of one candidate cluster count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub rss: f64,
    pub silhouette: f64,
}

/// Cluster count with the largest silhouette; ties go to the smaller k.
pub fn choose_k(table: &[KScore]) -> Option<usize> {
    let mut best: Option<KScore> = None;
    for s in table {
        let better = match best {
            None => true,
            Some(b) => s.silhouette > b.silhouette || (s.silhouette == b.silhouette && s.k < b.k),
        };
        if better {
            best = Some(*s);
        }
    }
    best.map(|b| b.k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KSelection {
    pub k: usize,
    pub table: Vec<KScore>,
    pub result: ClusteringResult,
}

/// Clusters for every k in `k_min..=k_max` (capped at `n - 1`) and keeps
/// the silhouette maximiser.
pub fn select_k(
    points: &Matrix,
    k_min: usize,
    k_max: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<KSelection, LabelError> {
    if k_min < 2 || k_max < k_min {
        return Err(LabelError::Parameter(
            "k range must satisfy 2 <= k_min <= k_max",
        ));
    }
    let k_max = k_max.min(points.rows().saturating_sub(1));
    if k_max < k_min {
        return Err(LabelError::TooFewPoints {
            needed: k_min + 1,
            got: points.rows(),
        });
    }
    let mut table = Vec::new();
    let mut results = Vec::new();
    for k in k_min..=k_max {
        let r = kmeans_with(points, k, seed, params)?;
        table.push(KScore {
            k,
            rss: r.rss,
            silhouette: r.silhouette.expect("k >= 2"),
        });
        results.push(r);
    }
    let k = choose_k(&table).expect("non-empty table");
    let result = results.swap_remove(k - k_min);
    Ok(KSelection { k, table, result })
}
