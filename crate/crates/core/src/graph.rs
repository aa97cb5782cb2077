//! Topology, fault placement and the containment areas derived from them.
//!
//! A [`Topology`] is immutable once built: hop distances are computed eagerly
//! so that every later query (areas, the `I_d` lower bounds, BFS oracles) is a
//! table lookup.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

pub type ProcessId = usize;
pub type ProcessSet = BTreeSet<ProcessId>;

/// Undirected connected graph with a distinguished root.
///
/// The order of `neighbors(v)` is the order in which `v`'s edges were supplied
/// and is the total order used by the round-robin parent choice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    root: ProcessId,
    edges: Vec<(ProcessId, ProcessId)>,
    neighbors: Vec<Vec<ProcessId>>,
    adjacency: Vec<bool>,
    distances: Vec<Vec<u32>>,
    max_degree: usize,
    diameter: u32,
}

impl Topology {
    pub fn new(
        process_count: usize,
        root: ProcessId,
        edges: impl IntoIterator<Item = (ProcessId, ProcessId)>,
    ) -> Result<Self> {
        let n = process_count;
        if n == 0 {
            return Err(Error::invalid("a topology needs at least one process"));
        }
        if root >= n {
            return Err(Error::invalid(format!("root {root} is not a process id (n = {n})")));
        }

        let mut adjacency = vec![false; n * n];
        let mut neighbors = vec![Vec::new(); n];
        let mut edge_list = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("edge {u}-{v} references a process >= {n}")));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop on process {u}")));
            }
            if adjacency[u * n + v] {
                return Err(Error::invalid(format!("duplicate edge {u}-{v}")));
            }
            adjacency[u * n + v] = true;
            adjacency[v * n + u] = true;
            neighbors[u].push(v);
            neighbors[v].push(u);
            edge_list.push((u, v));
        }

        let distances: Vec<Vec<u32>> = (0..n).map(|s| bfs_distances(&neighbors, s)).collect();
        if let Some(v) = distances[root].iter().position(|&d| d == u32::MAX) {
            return Err(Error::invalid(format!(
                "graph is disconnected: process {v} is unreachable from the root"
            )));
        }
        let diameter = distances.iter().flatten().copied().max().unwrap_or(0);
        let max_degree = neighbors.iter().map(Vec::len).max().unwrap_or(0);

        Ok(Topology {
            root,
            edges: edge_list,
            neighbors,
            adjacency,
            distances,
            max_degree,
            diameter,
        })
    }

    pub fn process_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn root(&self) -> ProcessId {
        self.root
    }

    pub fn processes(&self) -> std::ops::Range<ProcessId> {
        0..self.process_count()
    }

    /// Ordered neighbor list `N_v`.
    pub fn neighbors(&self, v: ProcessId) -> &[ProcessId] {
        &self.neighbors[v]
    }

    /// Degree `Δ_v`.
    pub fn degree(&self, v: ProcessId) -> usize {
        self.neighbors[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in input order.
    pub fn edges(&self) -> &[(ProcessId, ProcessId)] {
        &self.edges
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn contains(&self, v: ProcessId) -> bool {
        v < self.process_count()
    }

    /// True iff `u` and `v` are valid ids joined by an edge.
    pub fn are_adjacent(&self, u: ProcessId, v: ProcessId) -> bool {
        let n = self.process_count();
        u < n && v < n && self.adjacency[u * n + v]
    }

    /// Position of `u` in the ordered neighbor list of `v`.
    pub fn neighbor_rank(&self, v: ProcessId, u: ProcessId) -> Option<usize> {
        self.neighbors[v].iter().position(|&w| w == u)
    }

    pub fn hop_distance(&self, u: ProcessId, v: ProcessId) -> Result<u32> {
        if !self.contains(u) || !self.contains(v) {
            return Err(Error::invalid(format!(
                "hop distance between {u} and {v}: id out of range (n = {})",
                self.process_count()
            )));
        }
        Ok(self.distances[u][v])
    }

    /// Unchecked distance lookup for ids already known to be valid.
    pub(crate) fn dist(&self, u: ProcessId, v: ProcessId) -> u32 {
        self.distances[u][v]
    }
}

fn bfs_distances(neighbors: &[Vec<ProcessId>], source: ProcessId) -> Vec<u32> {
    let mut dist = vec![u32::MAX; neighbors.len()];
    let mut queue = VecDeque::from([source]);
    dist[source] = 0;
    while let Some(u) = queue.pop_front() {
        for &w in &neighbors[u] {
            if dist[w] == u32::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Byzantine placement `B`. The root is never Byzantine.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultModel {
    byzantine: ProcessSet,
}

impl FaultModel {
    pub fn fault_free() -> Self {
        Self::default()
    }

    pub fn new(topo: &Topology, byzantine: impl IntoIterator<Item = ProcessId>) -> Result<Self> {
        let byzantine: ProcessSet = byzantine.into_iter().collect();
        if let Some(&b) = byzantine.iter().find(|&&b| !topo.contains(b)) {
            return Err(Error::invalid(format!("Byzantine id {b} is not a process")));
        }
        if byzantine.contains(&topo.root()) {
            return Err(Error::contract(format!(
                "the root {} cannot be Byzantine",
                topo.root()
            )));
        }
        Ok(FaultModel { byzantine })
    }

    pub fn byzantine(&self) -> &ProcessSet {
        &self.byzantine
    }

    pub fn is_byzantine(&self, v: ProcessId) -> bool {
        self.byzantine.contains(&v)
    }

    pub fn is_correct(&self, v: ProcessId) -> bool {
        !self.is_byzantine(v)
    }

    /// `f = |B|`.
    pub fn fault_count(&self) -> usize {
        self.byzantine.len()
    }

    pub fn correct<'a>(&'a self, topo: &'a Topology) -> impl Iterator<Item = ProcessId> + 'a {
        topo.processes().filter(move |&v| self.is_correct(v))
    }

    /// `min_{b ∈ B} d(v, b)`, or `None` when `B` is empty.
    pub fn distance_to_byzantine(&self, topo: &Topology, v: ProcessId) -> Option<u32> {
        self.byzantine.iter().map(|&b| topo.dist(v, b)).min()
    }

    /// `min_{u ∈ B ∪ {r}} d(v, u)` for every process.
    pub fn source_distances(&self, topo: &Topology) -> Vec<u32> {
        topo.processes()
            .map(|v| {
                let to_root = topo.dist(v, topo.root());
                self.distance_to_byzantine(topo, v)
                    .map_or(to_root, |d| d.min(to_root))
            })
            .collect()
    }
}

/// The areas a Byzantine placement may disturb.
///
/// `s_b` holds correct non-root processes at least as close to some Byzantine
/// process as to the root; `s_b_star` those strictly closer; `e_b` the
/// equality frontier.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContainmentAreas {
    pub s_b: ProcessSet,
    pub s_b_star: ProcessSet,
    pub e_b: ProcessSet,
}

pub fn compute_containment_areas(topo: &Topology, fm: &FaultModel) -> Result<ContainmentAreas> {
    if fm.is_byzantine(topo.root()) {
        return Err(Error::contract("the root cannot be Byzantine"));
    }
    let mut areas = ContainmentAreas::default();
    for v in fm.correct(topo).filter(|&v| v != topo.root()) {
        let Some(to_byz) = fm.distance_to_byzantine(topo, v) else {
            continue;
        };
        let to_root = topo.dist(topo.root(), v);
        if to_byz <= to_root {
            areas.s_b.insert(v);
            if to_byz < to_root {
                areas.s_b_star.insert(v);
            } else {
                areas.e_b.insert(v);
            }
        }
    }
    Ok(areas)
}

/// Correct processes within `c` hops of some Byzantine process.
///
/// Instantiating the area-based checks with this set gives the radius-`c`
/// notions (`c`-correct, `c`-legitimate, `c`-disruption).
pub fn radius_area(topo: &Topology, fm: &FaultModel, c: u32) -> ProcessSet {
    fm.correct(topo)
        .filter(|&v| fm.distance_to_byzantine(topo, v).is_some_and(|d| d <= c))
        .collect()
}
