//! Driver-specific risk labels from clustering the host's response.
//!
//! Scenes in which the driver braked (`response_ax < 0`) are clustered on
//! either the longitudinal acceleration alone ([`FeatureSet::One`]) or all
//! five operation signals after range normalisation and kernel PCA
//! ([`FeatureSet::Two`]). Clusters are ranked by the mean response of their
//! members, strongest braking first, and every non-braking scene joins an
//! extra "not dangerous" level.

mod kmeans;
mod kpca;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

pub use kmeans::{
    choose_k, kmeans, kmeans_with, lloyd_run, rss, select_k, silhouette, ClusteringResult,
    KMeansParams, KScore, KSelection, LloydRun, Silhouette,
};
pub use kpca::{centered_rbf, kpca_project, median_gamma, KpcaProjection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("silhouette is undefined for a single cluster")]
    SingleCluster,
    #[error("no scene has a negative response acceleration; nothing to cluster")]
    NoBrakingScenes,
}

/// Host operation signals at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpFeature {
    pub ax: f64,
    pub ay: f64,
    pub steer: f64,
    pub brake: f64,
    pub throttle: f64,
}

impl OpFeature {
    pub fn to_array(self) -> [f64; 5] {
        [self.ax, self.ay, self.steer, self.brake, self.throttle]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Longitudinal acceleration only.
    #[default]
    One,
    /// All five operation signals.
    Two,
}

/// Maps every column onto `[-1, 1]` by `(2x - max - min) / (max - min)`.
/// Constant columns become zeros; their indices are returned.
pub fn normalize_features(points: &Matrix) -> Result<(Matrix, Vec<usize>), LabelError> {
    if points.rows() < 2 {
        return Err(LabelError::TooFewPoints {
            needed: 2,
            got: points.rows(),
        });
    }
    if !points.is_finite() {
        return Err(LabelError::NonFinite);
    }
    let mut out = points.clone();
    let mut constant = Vec::new();
    for c in 0..points.cols() {
        let (lo, hi) = points
            .col_iter(c)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x), hi.max(x))
            });
        if lo == hi {
            log::warn!("feature column {c} is constant; mapped to zeros");
            constant.push(c);
            for r in 0..points.rows() {
                out.set(r, c, 0.0);
            }
            continue;
        }
        if lo == -1.0 && hi == 1.0 {
            // already normalised: the map is the identity
            continue;
        }
        let span = hi - lo;
        for r in 0..points.rows() {
            let x = points.get(r, c);
            // written so that x = hi gives exactly 1 and x = lo exactly -1
            out.set(r, c, ((x - lo) - (hi - x)) / span);
        }
    }
    Ok((out, constant))
}

/// Per-scene risk levels: `1..=k` for the braking clusters (1 = strongest
/// braking) and `k + 1` for scenes that did not brake.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskLabelSet {
    pub levels: Vec<u32>,
    pub level_count: u32,
    /// Level given to each cluster index.
    pub cluster_levels: Vec<u32>,
    /// Mean response acceleration of each cluster's members.
    pub cluster_mean_ax: Vec<f64>,
}

impl RiskLabelSet {
    /// Count of scenes at each level, index 0 being level 1.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.level_count as usize];
        for &l in &self.levels {
            h[l as usize - 1] += 1;
        }
        h
    }
}

/// Orders clusters by the mean `response_ax` of their members and assigns
/// levels. `result.assignments` must list, in order, the clusters of the
/// scenes with negative `response_ax`.
pub fn to_risk_levels(
    result: &ClusteringResult,
    response_ax: &[f64],
) -> Result<RiskLabelSet, LabelError> {
    if response_ax.iter().any(|v| !v.is_finite()) {
        return Err(LabelError::NonFinite);
    }
    let braking: Vec<usize> = (0..response_ax.len())
        .filter(|&i| response_ax[i] < 0.0)
        .collect();
    if braking.is_empty() {
        return Err(LabelError::NoBrakingScenes);
    }
    if braking.len() != result.assignments.len() {
        return Err(LabelError::Shape(
            "one assignment per braking scene required",
        ));
    }
    let k = result.k;
    if result.assignments.iter().any(|&a| a >= k) {
        return Err(LabelError::Shape("assignment outside 0..k"));
    }
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&scene, &a) in braking.iter().zip(&result.assignments) {
        sums[a] += response_ax[scene];
        counts[a] += 1;
    }
    let means: Vec<f64> = (0..k)
        .map(|c| {
            if counts[c] > 0 {
                sums[c] / counts[c] as f64
            } else {
                0.0
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    let mut cluster_levels = vec![0u32; k];
    for (rank, &c) in order.iter().enumerate() {
        cluster_levels[c] = rank as u32 + 1;
    }
    let level_count = k as u32 + 1;
    let mut levels = vec![level_count; response_ax.len()];
    for (&scene, &a) in braking.iter().zip(&result.assignments) {
        levels[scene] = cluster_levels[a];
    }
    Ok(RiskLabelSet {
        levels,
        level_count,
        cluster_levels,
        cluster_mean_ax: means,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum KChoice {
    Auto(AutoK),
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoK {
    Auto,
}

impl Default for KChoice {
    fn default() -> Self {
        KChoice::Auto(AutoK::Auto)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelParams {
    pub feature: FeatureSet,
    pub k: KChoice,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub kmeans: KMeansParams,
    /// Kernel PCA components for [`FeatureSet::Two`].
    pub kpca_components: usize,
    /// RBF bandwidth; `None` uses the median heuristic.
    pub kpca_gamma: Option<f64>,
}

impl Default for LabelParams {
    fn default() -> Self {
        Self {
            feature: FeatureSet::One,
            k: KChoice::default(),
            k_min: 2,
            k_max: 10,
            seed: 0,
            kmeans: KMeansParams::default(),
            kpca_components: 2,
            kpca_gamma: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelOutcome {
    pub labels: RiskLabelSet,
    pub clustering: ClusteringResult,
    /// Per-k scores; empty for a fixed k.
    pub table: Vec<KScore>,
    /// Indices of the clustered (braking) scenes.
    pub clustered: Vec<usize>,
    pub kpca: Option<KpcaProjection>,
}

/// Clustering input for the braking scenes.
pub fn feature_points(responses: &[OpFeature], indices: &[usize], feature: FeatureSet) -> Matrix {
    match feature {
        FeatureSet::One => {
            Matrix::column(&indices.iter().map(|&i| responses[i].ax).collect::<Vec<_>>())
        }
        FeatureSet::Two => {
            let rows: Vec<[f64; 5]> = indices.iter().map(|&i| responses[i].to_array()).collect();
            Matrix::from_rows(&rows).expect("fixed width rows")
        }
    }
}

/// Full label generation from per-scene response signals.
pub fn generate_labels(
    responses: &[OpFeature],
    params: &LabelParams,
) -> Result<LabelOutcome, LabelError> {
    let response_ax: Vec<f64> = responses.iter().map(|r| r.ax).collect();
    let clustered: Vec<usize> = (0..responses.len())
        .filter(|&i| response_ax[i] < 0.0)
        .collect();
    if clustered.is_empty() {
        return Err(LabelError::NoBrakingScenes);
    }
    let raw = feature_points(responses, &clustered, params.feature);
    let (points, kpca) = match params.feature {
        FeatureSet::One => (raw, None),
        FeatureSet::Two => {
            let (norm, _) = normalize_features(&raw)?;
            let proj = kpca_project(&norm, params.kpca_gamma, params.kpca_components)?;
            (proj.scores.clone(), Some(proj))
        }
    };
    let (clustering, table) = match params.k {
        KChoice::Fixed(k) => (
            kmeans_with(&points, k, params.seed, &params.kmeans)?,
            Vec::new(),
        ),
        KChoice::Auto(_) => {
            let sel = select_k(
                &points,
                params.k_min,
                params.k_max,
                params.seed,
                &params.kmeans,
            )?;
            (sel.result, sel.table)
        }
    };
    let labels = to_risk_levels(&clustering, &response_ax)?;
    Ok(LabelOutcome {
        labels,
        clustering,
        table,
        clustered,
        kpca,
    })
}
