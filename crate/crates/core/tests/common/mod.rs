//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use proptest::prelude::*;
use rand::Rng;
use ssbfs::{Configuration, FaultModel, ProcessState, Topology};

/// `(n, root, edges)` of a connected graph: a random spanning tree plus
/// random extra edges.
pub fn arb_graph(min_n: usize, max_n: usize) -> impl Strategy<Value = (usize, usize, Vec<(usize, usize)>)> {
    (min_n..=max_n).prop_flat_map(|n| {
        let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
        let extra = proptest::collection::vec((0..n, 0..n), 0..=n);
        (Just(n), 0..n, parents, extra).prop_map(|(n, root, parents, extra)| {
            let mut edges: Vec<(usize, usize)> =
                parents.into_iter().enumerate().map(|(i, p)| (p, i + 1)).collect();
            for (u, v) in extra {
                let e = (u.min(v), u.max(v));
                if u != v && !edges.iter().any(|&(a, b)| (a.min(b), a.max(b)) == e) {
                    edges.push(e);
                }
            }
            (n, root, edges)
        })
    })
}

/// Same shape as [`arb_graph`], drawn from an rng instead of proptest.
pub fn random_graph(rng: &mut impl Rng, min_n: usize, max_n: usize, extra_prob: f64) -> Topology {
    let n = rng.gen_range(min_n..=max_n);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    for u in 0..n {
        for v in u + 1..n {
            if !edges.contains(&(u, v)) && rng.gen_bool(extra_prob) {
                edges.push((u, v));
            }
        }
    }
    let root = rng.gen_range(0..n);
    Topology::new(n, root, edges).unwrap()
}

/// `k` distinct non-root ids.
pub fn random_faults(rng: &mut impl Rng, topo: &Topology, k: usize) -> FaultModel {
    let mut ids: Vec<usize> = topo.processes().filter(|&v| v != topo.root()).collect();
    let mut chosen = Vec::new();
    for _ in 0..k.min(ids.len()) {
        chosen.push(ids.swap_remove(rng.gen_range(0..ids.len())));
    }
    FaultModel::new(topo, chosen).unwrap()
}

/// Breadth-first search over an edge list; `u32::MAX` for unreachable.
pub fn bfs_oracle(n: usize, edges: &[(usize, usize)], src: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; n];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &(a, b) in edges {
            let w = if a == u {
                b
            } else if b == u {
                a
            } else {
                continue;
            };
            if dist[w] == u32::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// All-pairs distances by Floyd–Warshall.
pub fn floyd(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<u32>> {
    const INF: u32 = u32::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0;
    }
    for &(u, v) in edges {
        d[u][v] = 1;
        d[v][u] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Levels in `[0, max_level]`, parents uniform over neighbors and `⊥`.
pub fn random_config(rng: &mut impl Rng, topo: &Topology, max_level: u64) -> Configuration {
    Configuration::from_states(
        topo.processes()
            .map(|v| {
                let nbrs = topo.neighbors(v);
                let pick = rng.gen_range(0..=nbrs.len());
                ProcessState::new(nbrs.get(pick).copied(), rng.gen_range(0..=max_level))
            })
            .collect(),
    )
}

/// Whether the non-root parent pointers form a spanning tree rooted at the
/// root: every process reaches the root by following them.
pub fn is_spanning_tree(topo: &Topology, cfg: &Configuration) -> bool {
    let n = topo.process_count();
    topo.processes().all(|v| {
        let mut cur = v;
        for _ in 0..n {
            if cur == topo.root() {
                return cfg.prnt(cur).is_none();
            }
            match cfg.prnt(cur) {
                Some(p) if topo.are_adjacent(cur, p) => cur = p,
                _ => return false,
            }
        }
        false
    })
}
