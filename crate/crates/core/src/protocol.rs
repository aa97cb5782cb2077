//! The min+1 BFS protocol: guards, the round-robin parent choice and the
//! simultaneous-step semantics of the shared-state model.
//!
//! Every correct non-root process `v` runs
//!
//! ```text
//! prnt_v = ⊥  ∨  level_v ≠ level_{prnt_v} + 1  ∨  level_{prnt_v} ≠ min_{q ∈ N_v} level_q
//!     ⟶  prnt_v := choose({p ∈ N_v | level_p = min}),  level_v := min + 1
//! ```
//!
//! and the root resets itself to `(⊥, 0)` whenever it is anything else.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{FaultModel, ProcessId, Topology};

pub type Level = u64;

/// O-variables of one process. `prnt == None` encodes `⊥`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ProcessState {
    pub prnt: Option<ProcessId>,
    pub level: Level,
}

impl ProcessState {
    pub const ROOT: ProcessState = ProcessState { prnt: None, level: 0 };

    pub fn new(prnt: Option<ProcessId>, level: Level) -> Self {
        ProcessState { prnt, level }
    }
}

impl fmt::Display for ProcessState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.prnt {
            Some(p) => write!(f, "{p} {}", self.level),
            None => write!(f, "-1 {}", self.level),
        }
    }
}

/// Writes performed by Byzantine processes during one step.
pub type ByzantineWrites = BTreeMap<ProcessId, ProcessState>;

/// Global state: one [`ProcessState`] per process.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    states: Vec<ProcessState>,
}

impl Configuration {
    pub fn from_states(states: Vec<ProcessState>) -> Self {
        Configuration { states }
    }

    /// Every process at `(⊥, 0)`.
    pub fn uniform(n: usize, state: ProcessState) -> Self {
        Configuration {
            states: vec![state; n],
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[ProcessState] {
        &self.states
    }

    pub fn get(&self, v: ProcessId) -> ProcessState {
        self.states[v]
    }

    pub fn level(&self, v: ProcessId) -> Level {
        self.states[v].level
    }

    pub fn prnt(&self, v: ProcessId) -> Option<ProcessId> {
        self.states[v].prnt
    }

    pub fn set(&mut self, v: ProcessId, state: ProcessState) {
        self.states[v] = state;
    }

    pub fn levels(&self) -> Vec<Level> {
        self.states.iter().map(|s| s.level).collect()
    }

    pub fn check_shape(&self, topo: &Topology) -> Result<()> {
        if self.states.len() != topo.process_count() {
            return Err(Error::invalid(format!(
                "configuration has {} states for {} processes",
                self.states.len(),
                topo.process_count()
            )));
        }
        Ok(())
    }

    /// Replaces a correct process's parent pointer that does not name a
    /// neighbor with `⊥`. Byzantine states are left untouched.
    pub fn normalize(&mut self, topo: &Topology, fm: &FaultModel) {
        for v in fm.correct(topo) {
            if let Some(p) = self.states[v].prnt {
                if !topo.are_adjacent(v, p) {
                    self.states[v].prnt = None;
                }
            }
        }
    }

    /// Processes whose state differs between `self` and `other`.
    pub fn diff<'a>(&'a self, other: &'a Configuration) -> impl Iterator<Item = ProcessId> + 'a {
        self.states
            .iter()
            .zip(&other.states)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(v, _)| v)
    }
}

fn min_neighbor_level(topo: &Topology, cfg: &Configuration, v: ProcessId) -> Option<Level> {
    topo.neighbors(v).iter().map(|&q| cfg.level(q)).min()
}

/// Guard of `R_r` (for the root) or `R_v` (otherwise).
///
/// A parent pointer that does not name a neighbor is treated like `⊥`.
pub fn is_enabled(topo: &Topology, cfg: &Configuration, v: ProcessId) -> bool {
    let own = cfg.get(v);
    if v == topo.root() {
        return own != ProcessState::ROOT;
    }
    let Some(p) = own.prnt.filter(|&p| topo.are_adjacent(v, p)) else {
        return true;
    };
    let parent_level = cfg.level(p);
    let Some(min) = min_neighbor_level(topo, cfg, v) else {
        // isolated non-root process: only possible in a single-process graph
        return false;
    };
    own.level != parent_level.saturating_add(1) || parent_level != min
}

/// Round-robin parent choice: the first candidate strictly after
/// `current_prnt` in `N_v` order, wrapping to the first candidate. `⊥` sorts
/// before every neighbor.
pub fn choose(
    topo: &Topology,
    v: ProcessId,
    current_prnt: Option<ProcessId>,
    candidates: &[ProcessId],
) -> Result<ProcessId> {
    if candidates.is_empty() {
        return Err(Error::contract(format!("choose on process {v} with no candidates")));
    }
    if let Some(&c) = candidates.iter().find(|&&c| !topo.are_adjacent(v, c)) {
        return Err(Error::contract(format!("candidate {c} is not a neighbor of {v}")));
    }
    Ok(round_robin(topo, v, current_prnt, |q| candidates.contains(&q))
        .expect("nonempty candidate subset of N_v"))
}

fn round_robin(
    topo: &Topology,
    v: ProcessId,
    current_prnt: Option<ProcessId>,
    is_candidate: impl Fn(ProcessId) -> bool,
) -> Option<ProcessId> {
    let nbrs = topo.neighbors(v);
    let start = current_prnt
        .and_then(|p| topo.neighbor_rank(v, p))
        .map_or(0, |rank| rank + 1);
    (0..nbrs.len())
        .map(|i| nbrs[(start + i) % nbrs.len()])
        .find(|&q| is_candidate(q))
}

/// State `v` moves to when its enabled rule fires in `cfg`.
pub fn apply_rule(topo: &Topology, cfg: &Configuration, v: ProcessId) -> Result<ProcessState> {
    if !is_enabled(topo, cfg, v) {
        return Err(Error::contract(format!("process {v} is not enabled")));
    }
    Ok(fire(topo, cfg, v))
}

// Rule body without the guard check; callers guarantee `v` is enabled.
pub(crate) fn fire(topo: &Topology, cfg: &Configuration, v: ProcessId) -> ProcessState {
    if v == topo.root() {
        return ProcessState::ROOT;
    }
    let min = min_neighbor_level(topo, cfg, v).expect("non-root process has a neighbor");
    let own_prnt = cfg.prnt(v).filter(|&p| topo.are_adjacent(v, p));
    let prnt = round_robin(topo, v, own_prnt, |q| cfg.level(q) == min)
        .expect("the minimum is attained by some neighbor");
    ProcessState::new(Some(prnt), min.saturating_add(1))
}

/// Correct processes whose guard holds in `cfg`, in id order.
pub fn enabled_set(topo: &Topology, fm: &FaultModel, cfg: &Configuration) -> Vec<ProcessId> {
    fm.correct(topo).filter(|&v| is_enabled(topo, cfg, v)).collect()
}

/// One simultaneous step: every activated correct process evaluates its rule
/// against `cfg`, every Byzantine write lands verbatim, everyone else keeps
/// their state.
pub fn step(
    topo: &Topology,
    fm: &FaultModel,
    cfg: &Configuration,
    activated: &[ProcessId],
    byz_writes: &ByzantineWrites,
) -> Result<Configuration> {
    cfg.check_shape(topo)?;
    let mut next = cfg.clone();
    for &v in activated {
        if !topo.contains(v) {
            return Err(Error::invalid(format!("activated id {v} is not a process")));
        }
        if fm.is_byzantine(v) {
            return Err(Error::contract(format!(
                "Byzantine process {v} in the activation set; Byzantine behavior goes through writes"
            )));
        }
        next.set(v, apply_rule(topo, cfg, v)?);
    }
    for (&b, &state) in byz_writes {
        if !fm.is_byzantine(b) {
            return Err(Error::contract(format!("write targets correct process {b}")));
        }
        next.set(b, state);
    }
    Ok(next)
}
