//! Occupancy-grid discretisation and labeled scene graphs.
//!
//! The forward 100 m of a three-lane road is cut into a 3 x 10 grid of 10 m
//! cells, numbered row-major from the host row, left to right:
//! `label = lanes * row + lane`. The host always occupies lane 2, row 0.
//! Vehicles become nodes labeled by their cell; two nodes are joined when
//! their cells are within Chebyshev distance 1 (the 3 x 3 block around a
//! vehicle). Non-host nodes without edges are removed.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::scenes::SceneFrame;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("position (lane {lane}, dy {dy}) is outside the grid")]
    OutOfGrid { lane: u8, dy: f64 },
    #[error("invalid grid: {0}")]
    Grid(&'static str),
    #[error("invalid graph {scene_ref}: {reason}")]
    Invalid {
        scene_ref: String,
        reason: &'static str,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub lanes: u8,
    pub rows: u8,
    /// Longitudinal length of one cell (m).
    pub cell_length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lanes: 3,
            rows: 10,
            cell_length: 10.0,
        }
    }
}

impl GridSpec {
    pub fn range(&self) -> f64 {
        self.rows as f64 * self.cell_length
    }

    pub fn max_label(&self) -> u8 {
        self.lanes * self.rows
    }

    /// Lane the host occupies (the middle one).
    pub fn host_lane(&self) -> u8 {
        self.lanes / 2 + 1
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.lanes == 0 || self.rows == 0 {
            return Err(GraphError::Grid("lanes and rows must be positive"));
        }
        if !(self.cell_length > 0.0) {
            return Err(GraphError::Grid("cell length must be positive"));
        }
        if (self.lanes as u16) * (self.rows as u16) > u8::MAX as u16 {
            return Err(GraphError::Grid("too many cells for u8 labels"));
        }
        Ok(())
    }

    /// `(lane, row)` of a cell label.
    pub fn cell_of(&self, label: u8) -> (u8, u8) {
        let zero = label - 1;
        (zero % self.lanes + 1, zero / self.lanes)
    }
}

/// Grid label of a vehicle in `lane` at longitudinal offset `dy`.
pub fn assign_cell(lane: u8, dy: f64, grid: &GridSpec) -> Result<u8, GraphError> {
    if !(1..=grid.lanes).contains(&lane) || !(0.0..grid.range()).contains(&dy) {
        return Err(GraphError::OutOfGrid { lane, dy });
    }
    let row = (math::floor(dy / grid.cell_length) as u8).min(grid.rows - 1);
    Ok(grid.lanes * row + lane)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub label: u8,
    pub host: bool,
}

/// Undirected labeled graph of one scene. Node ids are `0..n` with the host
/// first; edges are sorted `[u, v]` pairs with `u < v`, all labeled 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub scene_ref: String,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<[usize; 2]>,
}

impl SceneGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.nodes.iter().map(|n| n.label).collect()
    }

    /// Adjacency lists, neighbours in ascending order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = alloc::vec![Vec::new(); self.nodes.len()];
        for &[u, v] in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Structural invariants: contiguous ids, exactly one host, labels in
    /// range, no self-loops or duplicate edges, no isolated non-host node.
    pub fn validate(&self, grid: &GridSpec) -> Result<(), GraphError> {
        let bad = |reason| {
            Err(GraphError::Invalid {
                scene_ref: self.scene_ref.clone(),
                reason,
            })
        };
        if self.nodes.iter().enumerate().any(|(i, n)| n.id != i) {
            return bad("node ids must be 0..n in order");
        }
        if self.nodes.iter().filter(|n| n.host).count() != 1 {
            return bad("exactly one host node required");
        }
        if self
            .nodes
            .iter()
            .any(|n| n.label == 0 || n.label > grid.max_label())
        {
            return bad("node label outside the grid");
        }
        let n = self.nodes.len();
        let mut degree = alloc::vec![0usize; n];
        for (k, &[u, v]) in self.edges.iter().enumerate() {
            if u >= n || v >= n {
                return bad("edge endpoint out of range");
            }
            if u >= v {
                return bad("edges must be stored as [u, v] with u < v (no self-loops)");
            }
            if k > 0 && self.edges[k - 1] >= [u, v] {
                return bad("edges must be sorted and unique");
            }
            degree[u] += 1;
            degree[v] += 1;
        }
        if self
            .nodes
            .iter()
            .zip(&degree)
            .any(|(node, &d)| !node.host && d == 0)
        {
            return bad("isolated non-host node");
        }
        Ok(())
    }
}

fn chebyshev(grid: &GridSpec, a: u8, b: u8) -> u8 {
    let (la, ra) = grid.cell_of(a);
    let (lb, rb) = grid.cell_of(b);
    la.abs_diff(lb).max(ra.abs_diff(rb))
}

/// Builds the scene graph of a frame. Tracks outside the grid are ignored;
/// the host node is kept even when isolated.
pub fn build_graph(scene_ref: &str, frame: &SceneFrame, grid: &GridSpec) -> SceneGraph {
    let host_label = assign_cell(grid.host_lane(), 0.0, grid).expect("host cell inside the grid");
    let mut tracks: Vec<(u32, u8)> = frame
        .tracks
        .iter()
        .filter_map(|t| {
            assign_cell(t.lane, t.obs.dy, grid)
                .ok()
                .map(|l| (t.obs.track_id, l))
        })
        .collect();
    tracks.sort_unstable();

    let mut labels = Vec::with_capacity(tracks.len() + 1);
    labels.push(host_label);
    labels.extend(tracks.iter().map(|&(_, l)| l));

    let n = labels.len();
    let mut adjacent = alloc::vec![false; n * n];
    let mut degree = alloc::vec![0usize; n];
    for u in 0..n {
        for v in u + 1..n {
            if chebyshev(grid, labels[u], labels[v]) <= 1 {
                adjacent[u * n + v] = true;
                degree[u] += 1;
                degree[v] += 1;
            }
        }
    }
    // free-node removal, host exempt
    let keep: Vec<usize> = (0..n).filter(|&i| i == 0 || degree[i] > 0).collect();
    let mut new_id = alloc::vec![usize::MAX; n];
    for (k, &i) in keep.iter().enumerate() {
        new_id[i] = k;
    }
    let nodes = keep
        .iter()
        .enumerate()
        .map(|(k, &i)| GraphNode {
            id: k,
            label: labels[i],
            host: i == 0,
        })
        .collect();
    let mut edges = Vec::new();
    for &u in &keep {
        for &v in &keep {
            if u < v && adjacent[u * n + v] {
                edges.push([new_id[u], new_id[v]]);
            }
        }
    }
    edges.sort_unstable();
    SceneGraph {
        scene_ref: String::from(scene_ref),
        nodes,
        edges,
    }
}
