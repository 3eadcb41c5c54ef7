use super::*;
use crate::graphs::{build_graph, GraphNode, GridSpec};
use crate::ingest::TrackObservation;
use crate::rng::{seeded, SeededRng};
use crate::scenes::{LanedTrack, SceneFrame};
use alloc::collections::VecDeque;
use alloc::string::String;
use proptest::prelude::*;
use rand::Rng;

fn graph(labels: &[u8], edges: &[[usize; 2]]) -> SceneGraph {
    SceneGraph {
        scene_ref: String::from("t"),
        nodes: labels
            .iter()
            .enumerate()
            .map(|(id, &label)| GraphNode {
                id,
                label,
                host: id == 0,
            })
            .collect(),
        edges: edges.to_vec(),
    }
}

/// Arbitrary labeled graph (not necessarily grid-consistent).
fn random_graph(rng: &mut SeededRng, max_nodes: usize) -> SceneGraph {
    let n = rng.random_range(1..=max_nodes);
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(1..=6)).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.35) {
                edges.push([u, v]);
            }
        }
    }
    graph(&labels, &edges)
}

/// Scene graph built from random vehicle positions.
fn random_scene_graph(rng: &mut SeededRng) -> SceneGraph {
    let count = rng.random_range(2..=29);
    let tracks = (0..count)
        .map(|i| {
            let lane = rng.random_range(1..=3u8);
            LanedTrack {
                obs: TrackObservation {
                    track_id: i,
                    dx: (lane as f64 - 2.0) * 3.5,
                    dy: rng.random_range(0.0..40.0),
                    dvx: 0.0,
                    dvy: 0.0,
                },
                lane,
            }
        })
        .collect();
    let frame = SceneFrame {
        log_id: 0,
        t: 0.0,
        host_speed: 10.0,
        host_ax: 0.0,
        host_ay: 0.0,
        host_steer: 0.0,
        host_brake: 0.0,
        host_throttle: 0.0,
        lane_offsets: vec![-1.75, 1.75],
        tracks,
    };
    build_graph("r", &frame, &GridSpec::default())
}

fn permuted(g: &SceneGraph, perm: &[usize]) -> SceneGraph {
    // node i moves to position perm[i]
    let mut nodes = g.nodes.clone();
    for (i, n) in g.nodes.iter().enumerate() {
        nodes[perm[i]] = GraphNode {
            id: perm[i],
            ..n.clone()
        };
    }
    let mut edges: Vec<[usize; 2]> = g
        .edges
        .iter()
        .map(|&[u, v]| {
            let (a, b) = (perm[u], perm[v]);
            [a.min(b), a.max(b)]
        })
        .collect();
    edges.sort_unstable();
    SceneGraph {
        scene_ref: g.scene_ref.clone(),
        nodes,
        edges,
    }
}

fn bfs_distances(g: &SceneGraph, s: usize) -> Vec<Option<u32>> {
    let adj = g.adjacency();
    let mut dist = vec![None; g.node_count()];
    dist[s] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Raw SPGK by enumerating every pair of shortest-path entries.
fn spgk_pair_sum(g1: &SceneGraph, g2: &SceneGraph) -> f64 {
    let (s1, s2) = (shortest_paths(g1), shortest_paths(g2));
    let sorted = |l: &[u8], u: usize, v: usize| (l[u].min(l[v]), l[u].max(l[v]));
    let mut k = 0.0;
    for &(u, v, d) in &s1.entries {
        for &(a, b, e) in &s2.entries {
            if d == e && sorted(&s1.labels, u, v) == sorted(&s2.labels, a, b) {
                k += 1.0;
            }
        }
    }
    k
}

fn spgk_oracle(g1: &SceneGraph, g2: &SceneGraph) -> f64 {
    let k11 = spgk_pair_sum(g1, g1);
    let k22 = spgk_pair_sum(g2, g2);
    if k11 == 0.0 || k22 == 0.0 {
        0.0
    } else {
        spgk_pair_sum(g1, g2) / (k11 * k22).sqrt()
    }
}

/// Step-by-step neighborhood hash written independently of the library.
fn nhgk_oracle(g1: &SceneGraph, g2: &SceneGraph, h: u32, bits: u32, seed: u64) -> f64 {
    let mask = if bits == 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    };
    let rot = |x: u64| ((x << 1) & mask) | (x >> (bits - 1));
    let run = |g: &SceneGraph| {
        let mut labels: Vec<u64> = g
            .nodes
            .iter()
            .map(|n| crate::rng::splitmix64(seed ^ crate::rng::splitmix64(n.label as u64)) & mask)
            .collect();
        let mut out = Vec::new();
        for _ in 0..h {
            let mut next = Vec::new();
            for v in 0..labels.len() {
                let mut x = rot(labels[v]);
                for &[a, b] in &g.edges {
                    if a == v {
                        x ^= labels[b];
                    } else if b == v {
                        x ^= labels[a];
                    }
                }
                next.push(x);
            }
            labels = next;
            out.push(labels.clone());
        }
        out
    };
    let (l1, l2) = (run(g1), run(g2));
    let total = (g1.node_count() + g2.node_count()) as f64;
    let mut acc = 0.0;
    for i in 0..h as usize {
        let mut pool = l2[i].clone();
        let mut c = 0usize;
        for x in &l1[i] {
            if let Some(p) = pool.iter().position(|y| y == x) {
                pool.swap_remove(p);
                c += 1;
            }
        }
        acc += c as f64 / (total - c as f64);
    }
    acc / h as f64
}

#[test]
fn path_graph_entries() {
    let g = graph(&[1, 2, 3], &[[0, 1], [1, 2]]);
    let sp = shortest_paths(&g);
    assert_eq!(sp.entries, vec![(0, 1, 1), (0, 2, 2), (1, 2, 1)]);
    assert!(shortest_paths(&graph(&[2], &[])).entries.is_empty());
}

#[test]
fn shortest_paths_match_bfs() {
    let mut rng = seeded(11, 0);
    for _ in 0..200 {
        let g = random_graph(&mut rng, 10);
        let sp = shortest_paths(&g);
        let n = g.node_count();
        let mut expected = Vec::new();
        for u in 0..n {
            let d = bfs_distances(&g, u);
            for (v, dv) in d.iter().enumerate().skip(u + 1) {
                if let Some(dv) = dv {
                    expected.push((u, v, *dv));
                }
            }
        }
        assert_eq!(sp.entries, expected);
        let unit: Vec<_> = sp
            .entries
            .iter()
            .filter(|e| e.2 == 1)
            .map(|e| [e.0, e.1])
            .collect();
        assert_eq!(unit, g.edges);
    }
}

#[test]
fn spgk_basic_values() {
    let a = graph(&[2, 5], &[[0, 1]]);
    assert_eq!(spgk(&a, &a, true), 1.0);
    let b = graph(&[1, 4], &[[0, 1]]);
    assert_eq!(spgk(&a, &b, true), 0.0);
    // host alone has no path entries
    let lone = graph(&[2], &[]);
    assert_eq!(spgk(&lone, &lone, true), 0.0);
    assert_eq!(spgk(&a, &a, false), 1.0);
}

#[test]
fn spgk_matches_pair_sum_oracle() {
    let mut rng = seeded(12, 0);
    for _ in 0..300 {
        let g1 = random_graph(&mut rng, 8);
        let g2 = random_graph(&mut rng, 8);
        assert_eq!(spgk(&g1, &g2, false), spgk_pair_sum(&g1, &g2));
        assert!((spgk(&g1, &g2, true) - spgk_oracle(&g1, &g2)).abs() <= 1e-12);
    }
}

#[test]
fn nhgk_basic_values() {
    let p = NhgkParams::default();
    let a = graph(&[2, 5, 6], &[[0, 1], [1, 2]]);
    for h in 1..=5 {
        let q = NhgkParams { h, ..p.clone() };
        assert_eq!(nhgk(&a, &a, &q), 1.0);
    }
    // distinct labels and no structure in common
    let b = graph(&[11, 29], &[[0, 1]]);
    let c = graph(&[1], &[]);
    assert_eq!(nhgk(&b, &c, &p), 0.0);
}

#[test]
fn nhgk_matches_reference() {
    let mut rng = seeded(13, 0);
    let p = NhgkParams::default();
    for _ in 0..300 {
        let g1 = random_scene_graph(&mut rng);
        let g2 = random_scene_graph(&mut rng);
        assert_eq!(nhgk(&g1, &g2, &p), nhgk_oracle(&g1, &g2, 3, 16, 7));
    }
    let wide = NhgkParams {
        h: 2,
        bits: 64,
        seed: 99,
    };
    let g1 = random_scene_graph(&mut rng);
    let g2 = random_scene_graph(&mut rng);
    assert_eq!(nhgk(&g1, &g2, &wide), nhgk_oracle(&g1, &g2, 2, 64, 99));
}

#[test]
fn nhgk_rejects_bad_parameters() {
    assert!(NhgkParams {
        h: 0,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(NhgkParams {
        bits: 7,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(NhgkParams {
        bits: 65,
        ..Default::default()
    }
    .validate()
    .is_err());
    let g = graph(&[2], &[]);
    let cfg = KernelConfig::Nhgk(NhgkParams {
        h: 0,
        ..Default::default()
    });
    assert!(gram_matrix(&[g.clone(), g], &cfg).is_err());
}

#[test]
fn gram_of_identical_graphs_is_all_ones() {
    let g = graph(&[2, 5, 4], &[[0, 1], [0, 2], [1, 2]]);
    for cfg in [
        KernelConfig::Spgk { normalize: true },
        KernelConfig::Nhgk(NhgkParams::default()),
    ] {
        let k = gram_matrix(&vec![g.clone(); 4], &cfg).unwrap();
        assert!(k.values().iter().all(|&v| v == 1.0));
        let psd = k.psd.as_ref().unwrap();
        assert_eq!(psd.distinct_rows, 1);
    }
    assert_eq!(
        gram_matrix(&[g], &KernelConfig::Spgk { normalize: true }),
        Err(KernelError::TooFewItems(1))
    );
}

#[test]
fn gram_matrices_are_valid_kernels() {
    let mut rng = seeded(14, 0);
    let graphs: Vec<_> = (0..50).map(|_| random_scene_graph(&mut rng)).collect();
    for cfg in [
        KernelConfig::Spgk { normalize: true },
        KernelConfig::Nhgk(NhgkParams::default()),
    ] {
        let k = gram_matrix(&graphs, &cfg).unwrap();
        let psd = k.psd.clone().unwrap();
        assert!(psd.min_eigenvalue.unwrap() >= -PSD_TOL * psd.max_eigenvalue);
        for i in 0..50 {
            assert_eq!(k.get(i, i), 1.0);
            for j in 0..50 {
                assert_eq!(k.get(i, j), k.get(j, i));
                assert!((0.0..=1.0).contains(&k.get(i, j)));
            }
        }
    }
}

#[test]
fn shifted_cholesky_path_agrees() {
    let mut rng = seeded(15, 0);
    let graphs: Vec<_> = (0..40).map(|_| random_scene_graph(&mut rng)).collect();
    let k = gram_values(&graphs, &KernelConfig::Nhgk(NhgkParams::default())).unwrap();
    let dense = psd_check(&k).unwrap();
    assert_eq!(dense.method, PsdMethod::DenseEigen);
    let chol = psd_check_with_limit(&k, 0).unwrap();
    assert_eq!(chol.method, PsdMethod::ShiftedCholesky);
    assert!(chol.max_eigenvalue <= dense.max_eigenvalue * (1.0 + 1e-9));
    assert!(chol.max_eigenvalue >= dense.max_eigenvalue * 0.99);
    // a non-PSD matrix must be rejected with its negative eigenvalue
    let bad = KernelMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0], KernelConfig::Linear).unwrap();
    for limit in [0, DENSE_PSD_LIMIT] {
        match psd_check_with_limit(&bad, limit) {
            Err(KernelError::NotPsd { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }
}

#[test]
fn duplicate_rows_keep_the_spectrum() {
    // K = [[1, .5], [.5, 1]] expanded to rows (a, a, b): eigenvalues of the
    // expansion computed directly must agree with the collapsed check
    let v = [1.0, 1.0, 0.5, 1.0, 1.0, 0.5, 0.5, 0.5, 1.0];
    let k = KernelMatrix::new(3, v.to_vec(), KernelConfig::Linear).unwrap();
    let rep = psd_check(&k).unwrap();
    assert_eq!(rep.distinct_rows, 2);
    let (min, max) = crate::linalg::symmetric_eigenvalue_range(&DMatrix::from_row_slice(3, 3, &v));
    assert!((rep.min_eigenvalue.unwrap() - min).abs() < 1e-12);
    assert!((rep.max_eigenvalue - max).abs() < 1e-12);
}

#[test]
fn linear_gram_from_features() {
    let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]).unwrap();
    let k = KernelMatrix::linear(&x).unwrap();
    assert_eq!(k.row(2), &[1.0, 2.0, 2.0]);
    assert_eq!(k.psd.as_ref().unwrap().min_eigenvalue, Some(0.0));
}

#[test]
fn principal_submatrix_inherits_report() {
    let mut rng = seeded(16, 0);
    let graphs: Vec<_> = (0..6).map(|_| random_scene_graph(&mut rng)).collect();
    let k = gram_matrix(&graphs, &KernelConfig::Spgk { normalize: true }).unwrap();
    let sub = k.principal(&[4, 1]);
    assert_eq!(sub.get(0, 1), k.get(4, 1));
    assert!(sub.psd.unwrap().inherited);
    assert_eq!(k.row_subset(3, &[5, 0]), vec![k.get(3, 5), k.get(3, 0)]);
}

proptest! {
    #[test]
    fn kernels_are_permutation_invariant(seed in 0u64..5000) {
        let mut rng = seeded(seed, 1);
        let g = random_scene_graph(&mut rng);
        let other = random_scene_graph(&mut rng);
        let mut perm: Vec<usize> = (0..g.node_count()).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let pg = permuted(&g, &perm);
        let p = NhgkParams::default();
        prop_assert_eq!(spgk(&pg, &other, true).to_bits(), spgk(&g, &other, true).to_bits());
        prop_assert_eq!(nhgk(&pg, &other, &p).to_bits(), nhgk(&g, &other, &p).to_bits());
    }

    #[test]
    fn kernels_are_symmetric_and_bounded(seed in 0u64..5000) {
        let mut rng = seeded(seed, 2);
        let a = random_scene_graph(&mut rng);
        let b = random_scene_graph(&mut rng);
        let p = NhgkParams::default();
        let (s, n) = (spgk(&a, &b, true), nhgk(&a, &b, &p));
        prop_assert_eq!(s.to_bits(), spgk(&b, &a, true).to_bits());
        prop_assert_eq!(n.to_bits(), nhgk(&b, &a, &p).to_bits());
        prop_assert!((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&n));
    }
}
