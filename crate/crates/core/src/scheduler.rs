//! Daemons, fairness and the execution engine.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::Adversary;
use crate::error::{Error, Result};
use crate::graph::{FaultModel, ProcessId, Topology};
use crate::protocol::{self, ByzantineWrites, Configuration};

/// One transition `ρ_{i-1} → ρ_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    /// Correct processes that executed their rule, ascending.
    pub activated: Vec<ProcessId>,
    pub byz_writes: ByzantineWrites,
    /// The resulting configuration `ρ_i`.
    pub config: Configuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// No correct process enabled and the adversary had nothing to do.
    Quiescent,
    BudgetExhausted,
    PredicateMet,
    ScriptExhausted,
    /// Built step by step rather than by [`run`].
    Manual,
}

/// An initial configuration plus the transitions taken from it.
#[derive(Debug, Clone)]
pub struct Execution {
    topology: Arc<Topology>,
    faults: FaultModel,
    initial: Configuration,
    steps: Vec<StepRecord>,
    pub seed: u64,
    pub termination: Termination,
    /// Extra `key value` pairs stamped into trace headers.
    pub meta: Vec<(String, String)>,
}

impl Execution {
    pub fn new(
        topology: Arc<Topology>,
        faults: FaultModel,
        initial: Configuration,
        seed: u64,
    ) -> Result<Self> {
        initial.check_shape(&topology)?;
        if let Some(&b) = faults.byzantine().iter().find(|&&b| !topology.contains(b)) {
            return Err(Error::invalid(format!("Byzantine id {b} is not a process")));
        }
        Ok(Execution {
            topology,
            faults,
            initial,
            steps: Vec::new(),
            seed,
            termination: Termination::Manual,
            meta: Vec::new(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn topology_arc(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn faults(&self) -> &FaultModel {
        &self.faults
    }

    pub fn initial(&self) -> &Configuration {
        &self.initial
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `ρ_i` for `i` in `0..=len()`.
    pub fn configuration(&self, i: usize) -> &Configuration {
        if i == 0 {
            &self.initial
        } else {
            &self.steps[i - 1].config
        }
    }

    pub fn configurations(&self) -> impl Iterator<Item = &Configuration> + '_ {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.config))
    }

    pub fn last_configuration(&self) -> &Configuration {
        self.configuration(self.len())
    }

    /// Applies one step and records it.
    pub fn apply(&mut self, activated: &[ProcessId], byz_writes: &ByzantineWrites) -> Result<()> {
        let mut activated = activated.to_vec();
        activated.sort_unstable();
        activated.dedup();
        let config = protocol::step(
            &self.topology,
            &self.faults,
            self.last_configuration(),
            &activated,
            byz_writes,
        )?;
        self.steps.push(StepRecord {
            activated,
            byz_writes: byz_writes.clone(),
            config,
        });
        Ok(())
    }

    /// Appends a step without re-evaluating it. Used when loading traces;
    /// [`Execution::replay`] checks such steps afterwards.
    pub(crate) fn push_unchecked(&mut self, record: StepRecord) {
        self.steps.push(record);
    }

    /// Re-applies every stored transition and compares the outcome.
    pub fn replay(&self) -> std::result::Result<(), Divergence> {
        let mut current = self.initial.clone();
        for (idx, record) in self.steps.iter().enumerate() {
            let index = idx + 1;
            let next = protocol::step(
                &self.topology,
                &self.faults,
                &current,
                &record.activated,
                &record.byz_writes,
            )
            .map_err(|e| Divergence {
                index,
                reason: e.to_string(),
            })?;
            if next != record.config {
                let v = next.diff(&record.config).next().unwrap_or_default();
                return Err(Divergence {
                    index,
                    reason: format!(
                        "process {v}: recomputed ({}) but trace holds ({})",
                        next.get(v),
                        record.config.get(v)
                    ),
                });
            }
            current = next;
        }
        Ok(())
    }

    pub fn is_replayable(&self) -> bool {
        self.replay().is_ok()
    }
}

/// First step at which a stored execution disagrees with the protocol.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("trace diverges at step {index}: {reason}")]
pub struct Divergence {
    pub index: usize,
    pub reason: String,
}

/// True iff every stored transition is reproduced by the step function.
pub fn replay(execution: &Execution) -> bool {
    execution.is_replayable()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DaemonKind {
    /// Exactly one actor per step (a correct process or one Byzantine write).
    Central,
    /// Any nonempty subset of the enabled processes.
    Distributed,
    /// Every enabled process, every step.
    Synchronous,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fairness {
    RoundRobin,
    Random { seed: u64 },
    /// Explicit activation sets, one per step. Under the central daemon a
    /// set may name a single Byzantine process to let its write through.
    Script(Vec<Vec<ProcessId>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaemonPolicy {
    pub kind: DaemonKind,
    pub fairness: Fairness,
}

impl DaemonPolicy {
    pub fn central_round_robin() -> Self {
        DaemonPolicy {
            kind: DaemonKind::Central,
            fairness: Fairness::RoundRobin,
        }
    }

    pub fn distributed_random(seed: u64) -> Self {
        DaemonPolicy {
            kind: DaemonKind::Distributed,
            fairness: Fairness::Random { seed },
        }
    }

    pub fn synchronous() -> Self {
        DaemonPolicy {
            kind: DaemonKind::Synchronous,
            fairness: Fairness::RoundRobin,
        }
    }
}

impl fmt::Display for DaemonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DaemonKind::Central => "central",
            DaemonKind::Distributed => "distributed",
            DaemonKind::Synchronous => "synchronous",
        })
    }
}

impl FromStr for DaemonKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "central" => Ok(DaemonKind::Central),
            "distributed" => Ok(DaemonKind::Distributed),
            "synchronous" | "sync" => Ok(DaemonKind::Synchronous),
            other => Err(Error::invalid(format!("unknown daemon `{other}`"))),
        }
    }
}

impl fmt::Display for DaemonPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.fairness {
            Fairness::RoundRobin => write!(f, "{}/round-robin", self.kind),
            Fairness::Random { seed } => write!(f, "{}/random:{seed}", self.kind),
            Fairness::Script(sets) => write!(f, "{}/script:{}", self.kind, sets.len()),
        }
    }
}

type StopPredicate = Arc<dyn Fn(&Execution) -> bool + Send + Sync>;

/// When [`run`] stops. Every criterion also stops when nothing can happen
/// any more (no enabled correct process, no effective write, adversary
/// finished).
#[derive(Clone)]
pub enum StopCriterion {
    MaxSteps(usize),
    /// Stop at quiescence; the budget caps the run.
    Quiescent { budget: usize },
    Predicate { budget: usize, predicate: StopPredicate },
}

impl StopCriterion {
    pub fn predicate(
        budget: usize,
        predicate: impl Fn(&Execution) -> bool + Send + Sync + 'static,
    ) -> Self {
        StopCriterion::Predicate {
            budget,
            predicate: Arc::new(predicate),
        }
    }

    fn budget(&self) -> usize {
        match self {
            StopCriterion::MaxSteps(n) => *n,
            StopCriterion::Quiescent { budget } | StopCriterion::Predicate { budget, .. } => *budget,
        }
    }
}

impl fmt::Debug for StopCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopCriterion::MaxSteps(n) => write!(f, "MaxSteps({n})"),
            StopCriterion::Quiescent { budget } => write!(f, "Quiescent {{ budget: {budget} }}"),
            StopCriterion::Predicate { budget, .. } => write!(f, "Predicate {{ budget: {budget} }}"),
        }
    }
}

/// Default step budget `50·n·m` (at least 50).
pub fn default_budget(topo: &Topology) -> usize {
    50 * topo.process_count() * topo.edge_count().max(1)
}

/// Correct processes whose guard holds.
pub fn enabled_set(topo: &Topology, fm: &FaultModel, cfg: &Configuration) -> Vec<ProcessId> {
    protocol::enabled_set(topo, fm, cfg)
}

/// Bounded-fairness bookkeeping: `age[v]` counts the consecutive steps whose
/// pre-configuration had `v` enabled without `v` being activated.
struct FairnessMonitor {
    window: usize,
    age: Vec<usize>,
}

impl FairnessMonitor {
    fn new(n: usize) -> Self {
        FairnessMonitor {
            window: n.max(1),
            age: vec![0; n],
        }
    }

    fn slack(&self, v: ProcessId) -> usize {
        (self.window - 1).saturating_sub(self.age[v])
    }

    fn record(&mut self, step: usize, enabled: &[ProcessId], activated: &[ProcessId]) -> Result<()> {
        let mut is_enabled = vec![false; self.age.len()];
        for &v in enabled {
            is_enabled[v] = true;
        }
        for v in 0..self.age.len() {
            if !is_enabled[v] || activated.binary_search(&v).is_ok() {
                self.age[v] = 0;
            } else {
                self.age[v] += 1;
                if self.age[v] >= self.window {
                    return Err(Error::Fairness {
                        process: v,
                        window_start: step + 1 - self.window,
                        window_end: step,
                    });
                }
            }
        }
        Ok(())
    }
}

struct Daemon {
    policy: DaemonPolicy,
    rng: ChaCha8Rng,
    cursor: usize,
}

enum Choice {
    Step {
        activated: Vec<ProcessId>,
        writes: ByzantineWrites,
    },
    ScriptDone,
}

impl Daemon {
    fn new(policy: DaemonPolicy, seed: u64) -> Self {
        let rng_seed = match policy.fairness {
            Fairness::Random { seed: fairness_seed } => fairness_seed,
            _ => seed,
        };
        Daemon {
            policy,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            cursor: 0,
        }
    }

    fn choose(
        &mut self,
        step: usize,
        n: usize,
        enabled: &[ProcessId],
        proposals: ByzantineWrites,
        monitor: &FairnessMonitor,
    ) -> Result<Choice> {
        if let Fairness::Script(sets) = &self.policy.fairness {
            let Some(set) = sets.get(step - 1) else {
                return Ok(Choice::ScriptDone);
            };
            return self.scripted(set, enabled, proposals);
        }
        match self.policy.kind {
            DaemonKind::Synchronous => Ok(Choice::Step {
                activated: enabled.to_vec(),
                writes: proposals,
            }),
            DaemonKind::Distributed => {
                let activated = match self.policy.fairness {
                    Fairness::RoundRobin => {
                        let half: Vec<_> = enabled
                            .iter()
                            .copied()
                            .filter(|v| (v + step) % 2 == 0)
                            .collect();
                        if half.is_empty() {
                            enabled.to_vec()
                        } else {
                            half
                        }
                    }
                    _ => {
                        let mut chosen: Vec<_> = enabled
                            .iter()
                            .copied()
                            .filter(|&v| monitor.slack(v) == 0 || self.rng.gen_bool(0.5))
                            .collect();
                        if chosen.is_empty() && !enabled.is_empty() {
                            chosen.push(*enabled.choose(&mut self.rng).expect("nonempty"));
                        }
                        chosen
                    }
                };
                Ok(Choice::Step {
                    activated,
                    writes: proposals,
                })
            }
            DaemonKind::Central => Ok(self.central(n, enabled, proposals, monitor)),
        }
    }

    fn central(
        &mut self,
        n: usize,
        enabled: &[ProcessId],
        mut proposals: ByzantineWrites,
        monitor: &FairnessMonitor,
    ) -> Choice {
        let mut candidates: Vec<ProcessId> =
            enabled.iter().copied().chain(proposals.keys().copied()).collect();
        candidates.sort_unstable();
        if candidates.is_empty() {
            return Choice::Step {
                activated: Vec::new(),
                writes: ByzantineWrites::new(),
            };
        }
        let pick = match self.policy.fairness {
            Fairness::RoundRobin => {
                let pick = candidates
                    .iter()
                    .copied()
                    .find(|&v| v >= self.cursor)
                    .unwrap_or(candidates[0]);
                self.cursor = (pick + 1) % n.max(1);
                pick
            }
            _ => {
                let x = *candidates.choose(&mut self.rng).expect("nonempty");
                if edf_feasible(enabled, monitor, Some(x)) {
                    x
                } else {
                    // earliest deadline first
                    *enabled
                        .iter()
                        .min_by_key(|&&v| (monitor.slack(v), v))
                        .expect("infeasible only when something is enabled")
                }
            }
        };
        if let Some(state) = proposals.remove(&pick) {
            Choice::Step {
                activated: Vec::new(),
                writes: ByzantineWrites::from([(pick, state)]),
            }
        } else {
            Choice::Step {
                activated: vec![pick],
                writes: ByzantineWrites::new(),
            }
        }
    }

    fn scripted(
        &self,
        set: &[ProcessId],
        enabled: &[ProcessId],
        mut proposals: ByzantineWrites,
    ) -> Result<Choice> {
        if self.policy.kind == DaemonKind::Central && set.len() > 1 {
            return Err(Error::contract(format!(
                "central daemon script activates {} processes in one step",
                set.len()
            )));
        }
        let mut activated = Vec::new();
        let mut writes = ByzantineWrites::new();
        for &v in set {
            if let Some(state) = proposals.remove(&v) {
                writes.insert(v, state);
            } else if enabled.binary_search(&v).is_ok() {
                activated.push(v);
            } else {
                return Err(Error::contract(format!(
                    "scripted activation of process {v}, which is not enabled"
                )));
            }
        }
        if self.policy.kind == DaemonKind::Central {
            return Ok(Choice::Step { activated, writes });
        }
        // Outside the central daemon Byzantine processes write every step.
        writes.extend(proposals);
        Ok(Choice::Step { activated, writes })
    }
}

/// Whether every enabled process can still meet its fairness deadline if
/// this step serves `served` (or nobody, for a Byzantine pick).
fn edf_feasible(enabled: &[ProcessId], monitor: &FairnessMonitor, served: Option<ProcessId>) -> bool {
    let mut slacks: Vec<usize> = enabled
        .iter()
        .filter(|&&v| Some(v) != served)
        .map(|&v| monitor.slack(v))
        .collect();
    slacks.sort_unstable();
    // after this step each remaining slack drops by one; the i-th most urgent
    // is served i steps from now at the earliest
    slacks.iter().enumerate().all(|(i, &s)| s > i)
}

/// Drops writes that would leave the Byzantine state unchanged.
fn effective(writes: ByzantineWrites, cfg: &Configuration) -> ByzantineWrites {
    writes.into_iter().filter(|(b, s)| cfg.get(*b) != *s).collect()
}

/// Runs the protocol from `init` until `stop` says otherwise.
pub fn run(
    topology: Arc<Topology>,
    faults: FaultModel,
    init: Configuration,
    daemon: DaemonPolicy,
    adversary: &mut Adversary,
    stop: StopCriterion,
    seed: u64,
) -> Result<Execution> {
    let n = topology.process_count();
    let mut exec = Execution::new(topology, faults, init, seed)?;
    let mut daemon = Daemon::new(daemon, seed);
    let mut monitor = FairnessMonitor::new(n);
    let budget = stop.budget();

    loop {
        if let StopCriterion::Predicate { predicate, .. } = &stop {
            if predicate(&exec) {
                exec.termination = Termination::PredicateMet;
                return Ok(exec);
            }
        }
        let step = exec.len() + 1;
        let cfg = exec.last_configuration();
        let enabled = protocol::enabled_set(exec.topology(), exec.faults(), cfg);
        let proposals = effective(adversary.advise(&exec)?, exec.last_configuration());

        if enabled.is_empty() && proposals.is_empty() && adversary.finished(step) {
            exec.termination = Termination::Quiescent;
            return Ok(exec);
        }
        if exec.len() >= budget {
            exec.termination = Termination::BudgetExhausted;
            return Ok(exec);
        }

        let (activated, writes) = match daemon.choose(step, n, &enabled, proposals, &monitor)? {
            Choice::Step { activated, writes } => (activated, writes),
            Choice::ScriptDone => {
                exec.termination = Termination::ScriptExhausted;
                return Ok(exec);
            }
        };
        let mut activated = activated;
        activated.sort_unstable();
        monitor.record(step, &enabled, &activated)?;
        exec.apply(&activated, &writes)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::AdversaryKind;
    use crate::protocol::ProcessState;

    fn path(n: usize) -> Arc<Topology> {
        Arc::new(Topology::new(n, 0, (1..n).map(|i| (i - 1, i))).unwrap())
    }

    fn bottom_init(n: usize, level: u64) -> Configuration {
        let mut cfg = Configuration::uniform(n, ProcessState::new(None, level));
        cfg.set(0, ProcessState::ROOT);
        cfg
    }

    #[test]
    fn fault_free_path_converges_to_distances() {
        let topo = path(5);
        let exec = run(
            topo.clone(),
            FaultModel::fault_free(),
            Configuration::uniform(5, ProcessState::ROOT),
            DaemonPolicy::central_round_robin(),
            &mut Adversary::new(AdversaryKind::Silent),
            StopCriterion::Quiescent {
                budget: default_budget(&topo),
            },
            0,
        )
        .unwrap();
        assert_eq!(exec.termination, Termination::Quiescent);
        assert_eq!(exec.last_configuration().levels(), vec![0, 1, 2, 3, 4]);
        assert!(exec.steps().iter().all(|s| s.activated.len() == 1));
    }

    #[test]
    fn silent_legitimate_start_gives_empty_execution() {
        let topo = path(4);
        let states = (0..4)
            .map(|i| if i == 0 { ProcessState::ROOT } else { ProcessState::new(Some(i - 1), i as u64) })
            .collect();
        let exec = run(
            topo,
            FaultModel::fault_free(),
            Configuration::from_states(states),
            DaemonPolicy::distributed_random(3),
            &mut Adversary::new(AdversaryKind::Silent),
            StopCriterion::MaxSteps(100),
            0,
        )
        .unwrap();
        assert!(exec.is_empty());
        assert_eq!(exec.termination, Termination::Quiescent);
    }

    #[test]
    fn synchronous_activates_whole_enabled_set() {
        let topo = path(6);
        let fm = FaultModel::fault_free();
        let exec = run(
            topo.clone(),
            fm.clone(),
            bottom_init(6, 9),
            DaemonPolicy::synchronous(),
            &mut Adversary::new(AdversaryKind::Silent),
            StopCriterion::Quiescent { budget: 100 },
            0,
        )
        .unwrap();
        for i in 0..exec.len() {
            let enabled = enabled_set(&topo, &fm, exec.configuration(i));
            assert_eq!(exec.steps()[i].activated, enabled);
        }
    }

    #[test]
    fn same_seed_same_execution() {
        let topo = Arc::new(
            Topology::new(6, 0, [(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5)]).unwrap(),
        );
        let fm = FaultModel::new(&topo, [5]).unwrap();
        let go = || {
            run(
                topo.clone(),
                fm.clone(),
                bottom_init(6, 4),
                DaemonPolicy::distributed_random(9),
                &mut Adversary::new(AdversaryKind::Random { seed: 2 }),
                StopCriterion::MaxSteps(200),
                9,
            )
            .unwrap()
        };
        let (a, b) = (go(), go());
        assert_eq!(a.steps(), b.steps());
    }

    #[test]
    fn central_random_respects_the_fairness_window() {
        // the monitor turns any violation into an error
        let topo = Arc::new(
            Topology::new(7, 0, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 0), (1, 4)])
                .unwrap(),
        );
        let fm = FaultModel::new(&topo, [3]).unwrap();
        for seed in 0..20 {
            run(
                topo.clone(),
                fm.clone(),
                bottom_init(7, 0),
                DaemonPolicy {
                    kind: DaemonKind::Central,
                    fairness: Fairness::Random { seed },
                },
                &mut Adversary::new(AdversaryKind::Random { seed }),
                StopCriterion::MaxSteps(2_000),
                seed,
            )
            .unwrap();
        }
    }

    #[test]
    fn starving_script_is_rejected() {
        // process 2 stays enabled and the script never activates it
        let topo = path(3);
        let init = Configuration::from_states(vec![
            ProcessState::ROOT,
            ProcessState::new(Some(0), 1),
            ProcessState::new(None, 0),
        ]);
        let script = vec![vec![]; 5];
        let err = run(
            topo,
            FaultModel::fault_free(),
            init,
            DaemonPolicy {
                kind: DaemonKind::Distributed,
                fairness: Fairness::Script(script),
            },
            &mut Adversary::new(AdversaryKind::Silent),
            StopCriterion::MaxSteps(10),
            0,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::Fairness { process: 2, window_start: 1, window_end: 3 }
        ));
    }

    #[test]
    fn tampered_trace_fails_replay_at_that_step() {
        let topo = path(5);
        let mut exec = run(
            topo,
            FaultModel::fault_free(),
            bottom_init(5, 7),
            DaemonPolicy::central_round_robin(),
            &mut Adversary::new(AdversaryKind::Silent),
            StopCriterion::Quiescent { budget: 100 },
            0,
        )
        .unwrap();
        assert!(replay(&exec));
        let mut record = exec.steps[2].clone();
        let v = record.activated[0];
        let mut s = record.config.get(v);
        s.level += 10;
        record.config.set(v, s);
        exec.steps[2] = record;
        assert_eq!(exec.replay().unwrap_err().index, 3);
    }

    #[test]
    fn predicate_stop() {
        let topo = path(5);
        let exec = run(
            topo,
            FaultModel::fault_free(),
            bottom_init(5, 7),
            DaemonPolicy::synchronous(),
            &mut Adversary::new(AdversaryKind::Silent),
            StopCriterion::predicate(100, |e| e.last_configuration().level(1) == 1),
            0,
        )
        .unwrap();
        assert_eq!(exec.termination, Termination::PredicateMet);
        assert_eq!(exec.last_configuration().level(1), 1);
    }
}
