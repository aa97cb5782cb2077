//! Small-scope exhaustive checking: every connected labeled graph up to a
//! size, every Byzantine placement up to a count, a panel of initial
//! configurations and adversaries.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adversary::{Adversary, AdversaryKind};
use crate::analysis;
use crate::error::{Error, Result};
use crate::graph::{compute_containment_areas, ContainmentAreas, FaultModel, ProcessId, ProcessSet, Topology};
use crate::protocol::{Configuration, Level, ProcessState};
use crate::scenarios::random_configuration;
use crate::scheduler::{self, DaemonPolicy, StopCriterion};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExhaustiveOptions {
    pub n_max: usize,
    pub f_max: usize,
    /// Only compute containment areas; no executions.
    pub areas_only: bool,
    pub seed: u64,
}

impl ExhaustiveOptions {
    pub fn new(n_max: usize, f_max: usize) -> Self {
        ExhaustiveOptions {
            n_max,
            f_max,
            areas_only: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AreaRecord {
    pub edges: Vec<(ProcessId, ProcessId)>,
    pub n: usize,
    pub byzantine: ProcessSet,
    pub areas: ContainmentAreas,
}

#[derive(Debug, Clone, Default)]
pub struct ExhaustiveReport {
    pub graphs: usize,
    pub placements: usize,
    pub runs: usize,
    /// One line per failed check, naming graph, placement, init, adversary
    /// and seed.
    pub failures: Vec<String>,
    /// Filled in `areas_only` mode.
    pub areas: Vec<AreaRecord>,
}

impl ExhaustiveReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// The record for exactly this edge set (in any order) and placement.
    pub fn areas_for(&self, edges: &[(ProcessId, ProcessId)], byzantine: &ProcessSet) -> Option<&AreaRecord> {
        let mut key: Vec<_> = edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        key.sort_unstable();
        self.areas
            .iter()
            .find(|r| r.edges == key && &r.byzantine == byzantine)
    }
}

/// All edge sets over `0..n` (pairs `(u, v)`, `u < v`, lexicographic) whose
/// graph is connected.
pub fn connected_edge_sets(n: usize) -> Vec<Vec<(ProcessId, ProcessId)>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    assert!(pairs.len() < 32, "edge-set enumeration is limited to n ≤ 8");
    (0u32..1 << pairs.len())
        .into_par_iter()
        .filter_map(|mask| {
            let mut reach = 1u32;
            loop {
                let mut next = reach;
                for (i, &(u, v)) in pairs.iter().enumerate() {
                    if mask >> i & 1 == 1 && (reach >> u & 1 == 1 || reach >> v & 1 == 1) {
                        next |= 1 << u | 1 << v;
                    }
                }
                if next == reach {
                    break;
                }
                reach = next;
            }
            (reach.count_ones() as usize == n).then(|| {
                pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &e)| e)
                    .collect()
            })
        })
        .collect()
}

fn placements(n: usize, f_max: usize) -> Vec<ProcessSet> {
    let mut out = vec![ProcessSet::new()];
    for v in 1..n {
        let grown: Vec<ProcessSet> = out
            .iter()
            .filter(|s| s.len() < f_max)
            .map(|s| {
                let mut s = s.clone();
                s.insert(v);
                s
            })
            .collect();
        out.extend(grown);
    }
    out
}

fn init_panel(topo: &Topology, seed: u64) -> Vec<(&'static str, Configuration)> {
    let n = topo.process_count();
    let max = 2 * n as Level;
    let all_max = topo
        .processes()
        .map(|v| ProcessState::new(topo.neighbors(v).first().copied(), max))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        ("zero", Configuration::uniform(n, ProcessState::ROOT)),
        ("max", Configuration::from_states(all_max)),
        ("random", random_configuration(topo, &mut rng)),
    ]
}

fn adversary_panel(faulty: bool, seed: u64) -> Vec<AdversaryKind> {
    if faulty {
        vec![
            AdversaryKind::oscillator(),
            AdversaryKind::Random { seed },
            AdversaryKind::FakeRoot,
        ]
    } else {
        vec![AdversaryKind::Silent]
    }
}

fn check_graph(
    n: usize,
    edges: &[(ProcessId, ProcessId)],
    opts: &ExhaustiveOptions,
) -> Result<ExhaustiveReport> {
    let topo = Arc::new(Topology::new(n, 0, edges.iter().copied())?);
    let mut report = ExhaustiveReport {
        graphs: 1,
        ..Default::default()
    };
    for byz in placements(n, opts.f_max) {
        report.placements += 1;
        let fm = FaultModel::new(&topo, byz.iter().copied())?;
        if opts.areas_only {
            report.areas.push(AreaRecord {
                edges: edges.to_vec(),
                n,
                areas: compute_containment_areas(&topo, &fm)?,
                byzantine: byz,
            });
            continue;
        }
        for (init_name, mut init) in init_panel(&topo, opts.seed) {
            init.normalize(&topo, &fm);
            for kind in adversary_panel(!byz.is_empty(), opts.seed) {
                report.runs += 1;
                let label = format!(
                    "graph n={n} edges={edges:?} B={byz:?} init={init_name} adversary={kind} seed={}",
                    opts.seed
                );
                let exec = scheduler::run(
                    topo.clone(),
                    fm.clone(),
                    init.clone(),
                    DaemonPolicy::distributed_random(opts.seed),
                    &mut Adversary::new(kind),
                    StopCriterion::MaxSteps(scheduler::default_budget(&topo)),
                    opts.seed,
                )
                .map_err(|e| Error::invalid(format!("{label}: {e}")))?;
                let metrics = analysis::measure(&exec).map_err(|e| Error::invalid(format!("{label}: {e}")))?;
                let violations = analysis::check_convergence(&exec, &metrics)
                    .into_iter()
                    .chain(analysis::check_closure(&exec))
                    .chain(analysis::check_containment(&exec, &metrics))
                    .chain(analysis::check_bounds(&exec, &metrics));
                for v in violations {
                    report
                        .failures
                        .push(format!("{label} steps={}: {v}", exec.len()));
                }
            }
        }
    }
    Ok(report)
}

/// Checks convergence, closure, containment and both bounds on every
/// (graph, placement, init, adversary) combination up to `n_max` processes.
pub fn cmd_exhaustive(opts: &ExhaustiveOptions) -> Result<ExhaustiveReport> {
    if opts.n_max == 0 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    if opts.n_max > 8 {
        return Err(Error::invalid("exhaustive enumeration supports n_max ≤ 8"));
    }
    let mut total = ExhaustiveReport::default();
    for n in 1..=opts.n_max {
        let parts: Vec<ExhaustiveReport> = connected_edge_sets(n)
            .par_iter()
            .map(|edges| check_graph(n, edges, opts))
            .collect::<Result<_>>()?;
        for part in parts {
            total.graphs += part.graphs;
            total.placements += part.placements;
            total.runs += part.runs;
            total.failures.extend(part.failures);
            total.areas.extend(part.areas);
        }
    }
    Ok(total)
}
