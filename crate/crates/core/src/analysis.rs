//! Executable versions of the correctness and containment notions.
//!
//! Area-based checks take an `area` (the processes allowed to be disturbed);
//! a process is *area-correct* when it is correct and outside the area. The
//! radius-`c` notions are the same checks with [`crate::graph::radius_area`].

use crate::error::{Error, Result};
use crate::graph::{compute_containment_areas, ContainmentAreas, FaultModel, ProcessId, ProcessSet, Topology};
use crate::protocol::{self, Configuration, Level};
use crate::scheduler::{default_budget, Execution, Termination};

/// `spec(v)`: the root is `(⊥, 0)`; any other process ends a BFS path that
/// starts at the root or at a Byzantine process.
///
/// The path, if any, is the parent-pointer chain from `v`, so the check walks
/// that chain (at most `n` hops) verifying each condition literally.
pub fn spec_holds(topo: &Topology, fm: &FaultModel, cfg: &Configuration, v: ProcessId) -> bool {
    let state = cfg.get(v);
    if v == topo.root() {
        return state.prnt.is_none() && state.level == 0;
    }
    let mut visited = vec![false; topo.process_count()];
    let mut cur = v;
    loop {
        visited[cur] = true;
        let Some(p) = cfg.prnt(cur) else {
            return cur != v
                && (cur == topo.root() || fm.is_byzantine(cur))
                && cfg.level(cur) == 0;
        };
        if !topo.are_adjacent(cur, p) || visited[p] {
            return false;
        }
        let parent_level = cfg.level(p);
        if cfg.level(cur) != parent_level.saturating_add(1) {
            return false;
        }
        let min = topo.neighbors(cur).iter().map(|&q| cfg.level(q)).min();
        if min != Some(parent_level) {
            return false;
        }
        cur = p;
    }
}

/// `I_d`: every level is at least `min{d, distance to the nearest of B ∪ {r}}`.
pub fn predicate_i(topo: &Topology, fm: &FaultModel, cfg: &Configuration, d: u32) -> bool {
    let sources = fm.source_distances(topo);
    lower_bounds_hold(cfg, &sources, d)
}

fn lower_bounds_hold(cfg: &Configuration, source_dist: &[u32], d: u32) -> bool {
    cfg.states()
        .iter()
        .zip(source_dist)
        .all(|(s, &dist)| s.level >= Level::from(d.min(dist)))
}

/// Every correct process outside `area` satisfies `spec`.
pub fn is_area_legitimate(
    topo: &Topology,
    fm: &FaultModel,
    cfg: &Configuration,
    area: &ProcessSet,
) -> bool {
    fm.correct(topo)
        .filter(|v| !area.contains(v))
        .all(|v| spec_holds(topo, fm, cfg, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    /// The frozen re-run did not quiesce within its budget.
    Indeterminate,
}

/// Whether area-correct processes would keep their O-variables while the
/// Byzantine processes stay still.
///
/// Freezes the Byzantine states of `cfg` and runs the correct processes
/// synchronously until nothing is enabled, watching for a change by an
/// area-correct process. The budget is `50·n·m` steps.
pub fn is_area_stable(
    topo: &Topology,
    fm: &FaultModel,
    cfg: &Configuration,
    area: &ProcessSet,
) -> Stability {
    frozen_stability(topo, fm, cfg, |v| area.contains(&v), default_budget(topo))
}

fn frozen_stability(
    topo: &Topology,
    fm: &FaultModel,
    cfg: &Configuration,
    in_area: impl Fn(ProcessId) -> bool,
    budget: usize,
) -> Stability {
    let mut current = cfg.clone();
    for _ in 0..=budget {
        let enabled = protocol::enabled_set(topo, fm, &current);
        if enabled.is_empty() {
            return Stability::Stable;
        }
        // an enabled process always changes state when it fires
        if enabled.iter().any(|&v| !in_area(v)) {
            return Stability::Unstable;
        }
        let mut next = current.clone();
        for &v in &enabled {
            next.set(v, protocol::fire(topo, &current, v));
        }
        current = next;
    }
    Stability::Indeterminate
}

/// `S_B`-legitimate and `I_D`.
pub fn in_lc(topo: &Topology, fm: &FaultModel, cfg: &Configuration) -> Result<bool> {
    Ok(Analyzer::new(topo, fm)?.in_lc(cfg))
}

/// `S_B*`-legitimate and `I_D`.
pub fn in_lc_star(topo: &Topology, fm: &FaultModel, cfg: &Configuration) -> Result<bool> {
    Ok(Analyzer::new(topo, fm)?.in_lc_star(cfg))
}

/// Per-topology precomputation shared by the configuration-level checks.
#[derive(Debug, Clone)]
pub struct Analyzer<'a> {
    topo: &'a Topology,
    fm: &'a FaultModel,
    areas: ContainmentAreas,
    source_dist: Vec<u32>,
}

impl<'a> Analyzer<'a> {
    pub fn new(topo: &'a Topology, fm: &'a FaultModel) -> Result<Self> {
        Ok(Analyzer {
            topo,
            fm,
            areas: compute_containment_areas(topo, fm)?,
            source_dist: fm.source_distances(topo),
        })
    }

    pub fn areas(&self) -> &ContainmentAreas {
        &self.areas
    }

    pub fn predicate_i(&self, cfg: &Configuration, d: u32) -> bool {
        lower_bounds_hold(cfg, &self.source_dist, d)
    }

    pub fn in_lc(&self, cfg: &Configuration) -> bool {
        self.predicate_i(cfg, self.topo.diameter())
            && is_area_legitimate(self.topo, self.fm, cfg, &self.areas.s_b)
    }

    pub fn in_lc_star(&self, cfg: &Configuration) -> bool {
        self.predicate_i(cfg, self.topo.diameter())
            && is_area_legitimate(self.topo, self.fm, cfg, &self.areas.s_b_star)
    }
}

/// A maximal stretch between two consecutive area-legitimate, area-stable
/// configurations during which some area-correct process changed its
/// O-variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisruptionSegment {
    pub start_index: usize,
    pub end_index: usize,
    pub changed_processes: ProcessSet,
}

/// Splits `execution` into disruptions relative to `area`.
///
/// A disruption still open when the trace ends is not reported.
pub fn segment_disruptions(execution: &Execution, area: &ProcessSet) -> Result<Vec<DisruptionSegment>> {
    let topo = execution.topology();
    let fm = execution.faults();
    let watched: Vec<ProcessId> = fm.correct(topo).filter(|v| !area.contains(v)).collect();
    let budget = default_budget(topo);

    let mut segments = Vec::new();
    let mut open: Option<(usize, ProcessSet)> = None;
    let mut prev_good = false;
    for i in 0..=execution.len() {
        let cfg = execution.configuration(i);
        let mut unchanged = false;
        if i > 0 {
            let before = execution.configuration(i - 1);
            unchanged = before == cfg;
            if let Some((_, changed)) = open.as_mut() {
                changed.extend(watched.iter().copied().filter(|&v| before.get(v) != cfg.get(v)));
            }
        }
        let good = if unchanged {
            prev_good
        } else {
            is_area_legitimate(topo, fm, cfg, area)
                && match frozen_stability(topo, fm, cfg, |v| area.contains(&v), budget) {
                    Stability::Stable => true,
                    Stability::Unstable => false,
                    Stability::Indeterminate => {
                        return Err(Error::Analysis {
                            index: i,
                            message: "area stability undecided within the step budget".into(),
                        })
                    }
                }
        };
        if good {
            if let Some((start, changed)) = open.take() {
                if !changed.is_empty() {
                    segments.push(DisruptionSegment {
                        start_index: start,
                        end_index: i,
                        changed_processes: changed,
                    });
                }
            }
            open = Some((i, ProcessSet::new()));
        }
        prev_good = good;
    }
    Ok(segments)
}

/// Activations per process over the steps leaving configurations
/// `from_index..`. Byzantine processes count zero.
pub fn activation_counts(execution: &Execution, from_index: usize) -> Vec<usize> {
    let mut counts = vec![0; execution.topology().process_count()];
    for record in execution.steps().iter().skip(from_index) {
        for &v in &record.activated {
            counts[v] += 1;
        }
    }
    counts
}

/// O-variable changes per process over the steps leaving configurations
/// `from_index..`. Rewrites of identical values are not changes.
pub fn change_counts(execution: &Execution, from_index: usize) -> Vec<usize> {
    let mut counts = vec![0; execution.topology().process_count()];
    for i in (from_index + 1)..=execution.len() {
        for v in execution.configuration(i - 1).diff(execution.configuration(i)) {
            counts[v] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilizationMetrics {
    pub first_lc_index: Option<usize>,
    pub first_lc_star_index: Option<usize>,
    /// `S_B*`-disruptions starting at or after `first_lc_star_index`.
    pub disruption_count: usize,
    /// `S_B*`-disruptions anywhere in the trace.
    pub total_disruptions: usize,
    /// O-variable changes per process after `first_lc_star_index` (from the
    /// start when that index is absent).
    pub per_process_changes: Vec<usize>,
    /// Steps taken to reach the first `LC*` configuration.
    pub steps_to_contain: Option<usize>,
    pub areas: ContainmentAreas,
}

impl StabilizationMetrics {
    /// Largest change count among `S_B*`-correct processes.
    pub fn max_area_correct_changes(&self, fm: &FaultModel) -> usize {
        self.per_process_changes
            .iter()
            .enumerate()
            .filter(|(v, _)| fm.is_correct(*v) && !self.areas.s_b_star.contains(v))
            .map(|(_, &c)| c)
            .max()
            .unwrap_or(0)
    }
}

pub fn measure(execution: &Execution) -> Result<StabilizationMetrics> {
    let topo = execution.topology();
    let fm = execution.faults();
    let analyzer = Analyzer::new(topo, fm)?;
    let first_lc_index = execution.configurations().position(|c| analyzer.in_lc(c));
    let first_lc_star_index = execution.configurations().position(|c| analyzer.in_lc_star(c));
    let areas = analyzer.areas().clone();

    let segments = segment_disruptions(execution, &areas.s_b_star)?;
    let disruption_count = first_lc_star_index.map_or(0, |lc| {
        segments.iter().filter(|s| s.start_index >= lc).count()
    });
    Ok(StabilizationMetrics {
        first_lc_index,
        first_lc_star_index,
        disruption_count,
        total_disruptions: segments.len(),
        per_process_changes: change_counts(execution, first_lc_star_index.unwrap_or(0)),
        steps_to_contain: first_lc_star_index,
        areas,
    })
}

/// A failed containment or bound check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub check: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.check, self.detail)
    }
}

fn violation(check: &'static str, detail: String) -> Violation {
    Violation { check, detail }
}

/// Once in `LC`, no correct process outside `S_B` changes its O-variables.
pub fn check_containment(execution: &Execution, metrics: &StabilizationMetrics) -> Vec<Violation> {
    let Some(lc) = metrics.first_lc_index else {
        return vec![violation("containment", "no LC configuration reached".into())];
    };
    let fm = execution.faults();
    change_counts(execution, lc)
        .iter()
        .enumerate()
        .filter(|&(v, &c)| c > 0 && fm.is_correct(v) && !metrics.areas.s_b.contains(&v))
        .map(|(v, &c)| {
            violation(
                "containment",
                format!("process {v} outside S_B changed {c} times after configuration {lc}"),
            )
        })
        .collect()
}

/// Whether `v` has a correct neighbor outside `S_B`. Such a neighbor keeps a
/// minimal level forever once `LC` holds, which is what caps the number of
/// actions of an `E_B` process; without one the cap can be exceeded.
pub fn has_settled_neighbor(topo: &Topology, fm: &FaultModel, areas: &ContainmentAreas, v: ProcessId) -> bool {
    topo.neighbors(v)
        .iter()
        .any(|&q| fm.is_correct(q) && !areas.s_b.contains(&q))
}

/// Activation, disruption and per-process change bounds.
pub fn check_bounds(execution: &Execution, metrics: &StabilizationMetrics) -> Vec<Violation> {
    let topo = execution.topology();
    let fm = execution.faults();
    let mut out = Vec::new();

    match metrics.first_lc_index {
        Some(lc) => {
            let counts = activation_counts(execution, lc);
            for &v in &metrics.areas.e_b {
                if counts[v] > topo.degree(v) {
                    let note = if has_settled_neighbor(topo, fm, &metrics.areas, v) {
                        ""
                    } else {
                        "; every neighbor is Byzantine or in S_B"
                    };
                    out.push(violation(
                        "activation",
                        format!(
                            "E_B process {v} activated {} times after configuration {lc} (degree {}){note}",
                            counts[v],
                            topo.degree(v)
                        ),
                    ));
                }
            }
        }
        None => out.push(violation("activation", "no LC configuration reached".into())),
    }

    let Some(lc_star) = metrics.first_lc_star_index else {
        out.push(violation("disruption", "no LC* configuration reached".into()));
        return out;
    };
    let limit = 2 * topo.edge_count();
    if metrics.disruption_count > limit {
        out.push(violation(
            "disruption",
            format!(
                "{} S_B*-disruptions after configuration {lc_star} exceed 2m = {limit}",
                metrics.disruption_count
            ),
        ));
    }
    let delta = topo.max_degree();
    for v in fm.correct(topo).filter(|v| !metrics.areas.s_b_star.contains(v)) {
        let c = metrics.per_process_changes[v];
        if c > delta {
            out.push(violation(
                "changes",
                format!("process {v} changed {c} times after configuration {lc_star} (Δ = {delta})"),
            ));
        }
    }
    out
}

/// Without faults: the run went quiet with every level equal to the hop
/// distance to the root and every non-root parent one level closer. With
/// faults: some `LC*` configuration was reached.
pub fn check_convergence(execution: &Execution, metrics: &StabilizationMetrics) -> Vec<Violation> {
    let topo = execution.topology();
    if execution.faults().fault_count() > 0 {
        return match metrics.first_lc_star_index {
            Some(_) => Vec::new(),
            None => vec![violation("convergence", "no LC* configuration reached".into())],
        };
    }
    let mut out = Vec::new();
    if execution.termination != Termination::Quiescent {
        out.push(violation(
            "convergence",
            format!("not quiescent after {} steps", execution.len()),
        ));
    }
    let cfg = execution.last_configuration();
    for v in topo.processes() {
        let dist = Level::from(topo.dist(topo.root(), v));
        let parent_ok = match cfg.prnt(v) {
            None => v == topo.root(),
            Some(p) => topo.are_adjacent(v, p) && cfg.level(p) + 1 == cfg.level(v),
        };
        if cfg.level(v) != dist || !parent_ok {
            out.push(violation(
                "convergence",
                format!("process {v} ends at {} (distance {dist})", cfg.get(v)),
            ));
        }
    }
    out
}

/// `I_d` closure along every step of the trace, for every `d ≤ D`.
pub fn check_closure(execution: &Execution) -> Vec<Violation> {
    let topo = execution.topology();
    let sources = execution.faults().source_distances(topo);
    let mut out = Vec::new();
    for i in 1..=execution.len() {
        let (pre, post) = (execution.configuration(i - 1), execution.configuration(i));
        for d in 0..=topo.diameter() {
            if lower_bounds_hold(pre, &sources, d) && !lower_bounds_hold(post, &sources, d) {
                out.push(violation("closure", format!("I_{d} broken by step {i}")));
            }
        }
    }
    out
}
