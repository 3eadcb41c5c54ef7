use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::graphs::SceneGraph;
use crate::math;

/// All-pairs hop distances of a scene graph, restricted to connected pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShortestPathGraph {
    pub labels: Vec<u8>,
    /// `(u, v, d)` with `u < v` and finite hop count `d >= 1`.
    pub entries: Vec<(usize, usize, u32)>,
}

/// Floyd-Warshall over unit edge weights.
pub fn shortest_paths(g: &SceneGraph) -> ShortestPathGraph {
    const INF: u32 = u32::MAX / 2;
    let n = g.node_count();
    let mut dist = vec![INF; n * n];
    for i in 0..n {
        dist[i * n + i] = 0;
    }
    for &[u, v] in &g.edges {
        dist[u * n + v] = 1;
        dist[v * n + u] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i * n + k];
            if dik >= INF {
                continue;
            }
            for j in 0..n {
                let through = dik + dist[k * n + j];
                if through < dist[i * n + j] {
                    dist[i * n + j] = through;
                }
            }
        }
    }
    let mut entries = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let d = dist[u * n + v];
            if d < INF {
                entries.push((u, v, d));
            }
        }
    }
    ShortestPathGraph {
        labels: g.labels(),
        entries,
    }
}

/// Path key: hop count and the unordered endpoint label pair.
type PathKey = (u32, u8, u8);

/// Sparse histogram of shortest-path keys; the explicit feature map of the
/// delta path kernel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathFeatures {
    counts: Vec<(PathKey, u64)>,
    self_similarity: u64,
}

impl PathFeatures {
    pub fn from_graph(g: &SceneGraph) -> Self {
        Self::from_shortest_paths(&shortest_paths(g))
    }

    pub fn from_shortest_paths(sp: &ShortestPathGraph) -> Self {
        let mut map: BTreeMap<PathKey, u64> = BTreeMap::new();
        for &(u, v, d) in &sp.entries {
            let (a, b) = (sp.labels[u], sp.labels[v]);
            *map.entry((d, a.min(b), a.max(b))).or_default() += 1;
        }
        let counts: Vec<_> = map.into_iter().collect();
        let self_similarity = counts.iter().map(|(_, c)| c * c).sum();
        Self {
            counts,
            self_similarity,
        }
    }

    /// Number of matching `(path, path)` pairs.
    pub fn raw_dot(&self, other: &Self) -> u64 {
        let (mut i, mut j, mut acc) = (0, 0, 0u64);
        while i < self.counts.len() && j < other.counts.len() {
            let (ka, ca) = self.counts[i];
            let (kb, cb) = other.counts[j];
            match ka.cmp(&kb) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    acc += ca * cb;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn self_similarity(&self) -> u64 {
        self.self_similarity
    }

    /// Kernel value; `normalize` divides by the geometric mean of the
    /// self-similarities (0 when either is 0).
    pub fn kernel(&self, other: &Self, normalize: bool) -> f64 {
        let raw = self.raw_dot(other) as f64;
        if !normalize {
            return raw;
        }
        let denom = self.self_similarity as f64 * other.self_similarity as f64;
        if denom == 0.0 {
            0.0
        } else {
            raw / math::sqrt(denom)
        }
    }
}

/// Shortest-path graph kernel between two scene graphs.
pub fn spgk(g1: &SceneGraph, g2: &SceneGraph, normalize: bool) -> f64 {
    PathFeatures::from_graph(g1).kernel(&PathFeatures::from_graph(g2), normalize)
}
