use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graphs::SceneGraph;
use crate::rng::splitmix64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NhgkParams {
    /// Hashing iterations.
    pub h: u32,
    /// Label bit width.
    pub bits: u32,
    pub seed: u64,
}

impl Default for NhgkParams {
    fn default() -> Self {
        Self {
            h: 3,
            bits: 16,
            seed: 7,
        }
    }
}

impl NhgkParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.h < 1 {
            return Err("nhgk needs at least one iteration");
        }
        if !(8..=64).contains(&self.bits) {
            return Err("nhgk bit width must lie in [8, 64]");
        }
        Ok(())
    }

    fn mask(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    /// Initial bit label of a grid cell label.
    pub fn initial_label(&self, cell: u8) -> u64 {
        splitmix64(self.seed ^ splitmix64(cell as u64)) & self.mask()
    }

    /// Rotate left by one within `bits`.
    pub fn rotate(&self, x: u64) -> u64 {
        if self.bits == 64 {
            x.rotate_left(1)
        } else {
            ((x << 1) | (x >> (self.bits - 1))) & self.mask()
        }
    }
}

/// Sorted node-label multisets after each hashing iteration `1..=h`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashedLabels {
    node_count: usize,
    iterations: Vec<Vec<u64>>,
}

impl HashedLabels {
    pub fn from_graph(g: &SceneGraph, params: &NhgkParams) -> Self {
        let adj = g.adjacency();
        let mut labels: Vec<u64> = g
            .nodes
            .iter()
            .map(|n| params.initial_label(n.label))
            .collect();
        let mut iterations = Vec::with_capacity(params.h as usize);
        for _ in 0..params.h {
            labels = adj
                .iter()
                .enumerate()
                .map(|(v, nbrs)| {
                    nbrs.iter()
                        .fold(params.rotate(labels[v]), |acc, &u| acc ^ labels[u])
                })
                .collect();
            let mut sorted = labels.clone();
            sorted.sort_unstable();
            iterations.push(sorted);
        }
        Self {
            node_count: g.node_count(),
            iterations,
        }
    }

    /// `(1/h) * sum_i c_i / (|V| + |V'| - c_i)`.
    pub fn kernel(&self, other: &Self) -> f64 {
        let h = self.iterations.len().min(other.iterations.len());
        if h == 0 {
            return 0.0;
        }
        let total = (self.node_count + other.node_count) as f64;
        let mut acc = 0.0;
        for (a, b) in self.iterations.iter().zip(&other.iterations) {
            let c = multiset_intersection(a, b) as f64;
            acc += c / (total - c);
        }
        acc / h as f64
    }
}

fn multiset_intersection(a: &[u64], b: &[u64]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Neighborhood-hash graph kernel.
pub fn nhgk(g1: &SceneGraph, g2: &SceneGraph, params: &NhgkParams) -> f64 {
    HashedLabels::from_graph(g1, params).kernel(&HashedLabels::from_graph(g2, params))
}
