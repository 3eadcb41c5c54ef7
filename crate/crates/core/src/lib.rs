//! Driver-specific risky scene recognition.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithm of the
//! pipeline: signal smoothing and a synthetic log generator ([`ingest`]),
//! bird's-eye scene extraction ([`scenes`]), occupancy-grid scene graphs
//! ([`graphs`]), shortest-path and neighborhood-hash graph kernels
//! ([`kernels`]), driver-response clustering into risk levels ([`labels`]) and
//! a precomputed-kernel SVM with stratified cross-validation ([`classify`]).
//!
//! File formats, configuration and the command line live in the companion
//! `riskgraph` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod classify;
pub mod graphs;
pub mod ingest;
pub mod kernels;
pub mod labels;
pub mod linalg;
pub mod math;
pub mod rng;
pub mod scenes;

pub use classify::{ConfusionMatrix, TrainedModel};
pub use graphs::{GridSpec, SceneGraph};
pub use ingest::{DriverLogRecord, TrackObservation};
pub use kernels::{KernelConfig, KernelMatrix};
pub use labels::{ClusteringResult, OpFeature, RiskLabelSet};
pub use linalg::Matrix;
pub use scenes::{Scene, SceneFrame, VrmFeature};
