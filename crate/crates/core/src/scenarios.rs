//! Topology generators and the scripted replays of the impossibility
//! constructions.
//!
//! Scenario specs have a one-line text form, e.g.
//!
//! ```text
//! line c=2
//! hexagon
//! random n=10 p=0.3 seed=4 faults=2
//! path n=6 byz=5
//! grid w=3 h=4 faults=1 byz-seed=9
//! ```
//!
//! `byz=` lists Byzantine ids explicitly, `faults=` draws that many non-root
//! ids at random (seeded by `byz-seed`, default 0). Without either, `line`
//! and `hexagon` use their built-in Byzantine process and the others are
//! fault-free.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{FaultModel, ProcessId, ProcessSet, Topology};
use crate::protocol::{self, ByzantineWrites, Configuration, Level, ProcessState};
use crate::scheduler::{default_budget, Execution};

/// Hexagon process ids.
pub mod hexagon {
    use crate::graph::ProcessId;

    pub const R: ProcessId = 0;
    pub const U: ProcessId = 1;
    pub const U_PRIME: ProcessId = 2;
    pub const V: ProcessId = 3;
    pub const V_PRIME: ProcessId = 4;
    pub const B: ProcessId = 5;
}

/// Attempts at drawing a connected random graph before giving up.
pub const GENERATION_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    /// Chain `p0 .. p_{2c+3}` rooted at `p0`, Byzantine `p_{2c+3}`.
    Line { c: usize },
    Hexagon,
    /// Erdős–Rényi `G(n, p)` redrawn until connected; root 0.
    Random { n: usize, edge_prob: f64, seed: u64 },
    Path { n: usize },
    /// `w × h` grid, id `y·w + x`, root 0.
    Grid { w: usize, h: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ByzPlacement {
    /// Built-in placement of the kind (none for generic generators).
    Default,
    Explicit(Vec<ProcessId>),
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub kind: ScenarioKind,
    pub byz: ByzPlacement,
}

impl ScenarioParams {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioParams {
            kind,
            byz: ByzPlacement::Default,
        }
    }

    pub fn with_byzantine(mut self, ids: impl IntoIterator<Item = ProcessId>) -> Self {
        self.byz = ByzPlacement::Explicit(ids.into_iter().collect());
        self
    }

    pub fn with_random_faults(mut self, count: usize, seed: u64) -> Self {
        self.byz = ByzPlacement::Random { count, seed };
        self
    }
}

impl fmt::Display for ScenarioParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ScenarioKind::Line { c } => write!(f, "line c={c}")?,
            ScenarioKind::Hexagon => write!(f, "hexagon")?,
            ScenarioKind::Random { n, edge_prob, seed } => {
                write!(f, "random n={n} p={edge_prob} seed={seed}")?
            }
            ScenarioKind::Path { n } => write!(f, "path n={n}")?,
            ScenarioKind::Grid { w, h } => write!(f, "grid w={w} h={h}")?,
        }
        match &self.byz {
            ByzPlacement::Default => Ok(()),
            ByzPlacement::Explicit(ids) => {
                let ids: Vec<String> = ids.iter().map(ToString::to_string).collect();
                write!(f, " byz={}", ids.join(","))
            }
            ByzPlacement::Random { count, seed } => write!(f, " faults={count} byz-seed={seed}"),
        }
    }
}

impl FromStr for ScenarioParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut words = s.split_whitespace();
        let kind_name = words
            .next()
            .ok_or_else(|| Error::invalid("empty scenario spec"))?;
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for word in words {
            let (k, v) = word
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value, got `{word}`")))?;
            keys.push((k, v));
        }
        let mut take = |key: &str| -> Option<&str> {
            let idx = keys.iter().position(|(k, _)| *k == key)?;
            Some(keys.remove(idx).1)
        };
        fn num<T: FromStr>(key: &str, value: Option<&str>) -> Result<T> {
            let value = value.ok_or_else(|| Error::invalid(format!("missing `{key}=`")))?;
            value
                .parse()
                .map_err(|_| Error::invalid(format!("bad value for `{key}`: `{value}`")))
        }

        let kind = match kind_name {
            "line" => ScenarioKind::Line { c: num("c", take("c"))? },
            "hexagon" => ScenarioKind::Hexagon,
            "random" => ScenarioKind::Random {
                n: num("n", take("n"))?,
                edge_prob: num("p", take("p"))?,
                seed: take("seed").map_or(Ok(0), |v| num("seed", Some(v)))?,
            },
            "path" => ScenarioKind::Path { n: num("n", take("n"))? },
            "grid" => ScenarioKind::Grid {
                w: num("w", take("w"))?,
                h: num("h", take("h"))?,
            },
            other => return Err(Error::invalid(format!("unknown scenario kind `{other}`"))),
        };
        let byz = match (take("byz"), take("faults")) {
            (Some(_), Some(_)) => return Err(Error::invalid("give either `byz=` or `faults=`, not both")),
            (Some(list), None) => ByzPlacement::Explicit(
                list.split(',')
                    .filter(|t| !t.is_empty())
                    .map(|t| num("byz", Some(t)))
                    .collect::<Result<_>>()?,
            ),
            (None, Some(count)) => ByzPlacement::Random {
                count: num("faults", Some(count))?,
                seed: take("byz-seed").map_or(Ok(0), |v| num("byz-seed", Some(v)))?,
            },
            (None, None) => ByzPlacement::Default,
        };
        if let Some((k, _)) = keys.first() {
            return Err(Error::invalid(format!("unknown key `{k}` for `{kind_name}`")));
        }
        Ok(ScenarioParams { kind, byz })
    }
}

pub fn line_topology(c: usize) -> Result<Topology> {
    path_topology(2 * c + 4)
}

pub fn path_topology(n: usize) -> Result<Topology> {
    Topology::new(n, 0, (1..n).map(|i| (i - 1, i)))
}

pub fn hexagon_topology() -> Topology {
    use hexagon::*;
    Topology::new(6, R, [(R, U), (R, U_PRIME), (U, V), (U_PRIME, V_PRIME), (V, B), (V_PRIME, B)])
        .expect("hexagon is connected")
}

pub fn grid_topology(w: usize, h: usize) -> Result<Topology> {
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let id = y * w + x;
            if x + 1 < w {
                edges.push((id, id + 1));
            }
            if y + 1 < h {
                edges.push((id, id + w));
            }
        }
    }
    Topology::new(w * h, 0, edges)
}

fn is_connected(n: usize, edges: &[(ProcessId, ProcessId)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for &(u, v) in edges {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components <= 1
}

/// `G(n, p)` with root 0, redrawn from the same stream until connected.
pub fn random_topology(n: usize, edge_prob: f64, seed: u64) -> Result<Topology> {
    if n == 0 || !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::invalid(format!("random graph needs n ≥ 1 and 0 ≤ p ≤ 1 (n = {n}, p = {edge_prob})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATION_RETRIES {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(edge_prob) {
                    edges.push((u, v));
                }
            }
        }
        if is_connected(n, &edges) {
            return Topology::new(n, 0, edges);
        }
    }
    Err(Error::Generation(format!(
        "no connected G({n}, {edge_prob}) within {GENERATION_RETRIES} draws (seed {seed})"
    )))
}

/// `count` distinct non-root ids, uniformly at random.
pub fn random_byzantine(topo: &Topology, count: usize, seed: u64) -> Result<FaultModel> {
    let mut candidates: Vec<ProcessId> = topo.processes().filter(|&v| v != topo.root()).collect();
    if count > candidates.len() {
        return Err(Error::invalid(format!(
            "cannot place {count} Byzantine processes among {} non-root processes",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    FaultModel::new(topo, candidates.into_iter().take(count))
}

pub fn build(params: &ScenarioParams) -> Result<(Topology, FaultModel)> {
    let (topo, default_byz) = match params.kind {
        ScenarioKind::Line { c } => (line_topology(c)?, vec![2 * c + 3]),
        ScenarioKind::Hexagon => (hexagon_topology(), vec![hexagon::B]),
        ScenarioKind::Random { n, edge_prob, seed } => (random_topology(n, edge_prob, seed)?, vec![]),
        ScenarioKind::Path { n } => (path_topology(n)?, vec![]),
        ScenarioKind::Grid { w, h } => (grid_topology(w, h)?, vec![]),
    };
    let fm = match &params.byz {
        ByzPlacement::Default => FaultModel::new(&topo, default_byz)?,
        ByzPlacement::Explicit(ids) => FaultModel::new(&topo, ids.iter().copied())?,
        ByzPlacement::Random { count, seed } => random_byzantine(&topo, *count, *seed)?,
    };
    Ok((topo, fm))
}

/// Every process at `(first neighbor, n)`: far from any legitimate state.
pub fn corrupted_configuration(topo: &Topology) -> Configuration {
    let n = topo.process_count() as Level;
    Configuration::from_states(
        topo.processes()
            .map(|v| ProcessState::new(topo.neighbors(v).first().copied(), n))
            .collect(),
    )
}

/// Levels uniform in `[0, 2n]`, parents uniform over neighbors and `⊥`.
pub fn random_configuration(topo: &Topology, rng: &mut impl Rng) -> Configuration {
    let max = 2 * topo.process_count() as Level;
    Configuration::from_states(
        topo.processes()
            .map(|v| {
                let nbrs = topo.neighbors(v);
                let pick = rng.gen_range(0..=nbrs.len());
                ProcessState::new(nbrs.get(pick).copied(), rng.gen_range(0..=max))
            })
            .collect(),
    )
}

/// Byzantine behaviour during one replay phase.
enum ByzRole {
    Still,
    /// Copy the root's state.
    MirrorRoot,
    /// Fire the protocol rule like a correct non-root process.
    Honest,
}

/// Central round-robin over all ids until no correct process is enabled and
/// the Byzantine role has nothing to write.
fn settle(exec: &mut Execution, phase: &str, role: ByzRole) -> Result<()> {
    let topo = exec.topology_arc().clone();
    let fm = exec.faults().clone();
    let n = topo.process_count();
    let budget = exec.len() + default_budget(&topo);
    let mut cursor = 0;
    loop {
        let cfg = exec.last_configuration();
        let byz_write = |b: ProcessId| -> Option<ProcessState> {
            let target = match role {
                ByzRole::Still => return None,
                ByzRole::MirrorRoot => cfg.get(topo.root()),
                ByzRole::Honest if protocol::is_enabled(&topo, cfg, b) => protocol::fire(&topo, cfg, b),
                ByzRole::Honest => return None,
            };
            (target != cfg.get(b)).then_some(target)
        };
        let next = (0..n).map(|k| (cursor + k) % n).find_map(|v| {
            if fm.is_byzantine(v) {
                byz_write(v).map(|s| (v, Some(s)))
            } else {
                protocol::is_enabled(&topo, cfg, v).then_some((v, None))
            }
        });
        let Some((v, write)) = next else {
            return Ok(());
        };
        if exec.len() >= budget {
            return Err(Error::Scenario {
                phase: phase.into(),
                message: format!("not quiescent after {} steps", default_budget(&topo)),
            });
        }
        match write {
            Some(s) => exec.apply(&[], &ByzantineWrites::from([(v, s)]))?,
            None => exec.apply(&[v], &ByzantineWrites::new())?,
        }
        cursor = (v + 1) % n;
    }
}

fn byz_write(exec: &mut Execution, b: ProcessId, state: ProcessState) -> Result<()> {
    exec.apply(&[], &ByzantineWrites::from([(b, state)]))
}

fn expect_levels(exec: &Execution, phase: &str, expected: &[Level]) -> Result<()> {
    let got = exec.last_configuration().levels();
    if got != expected {
        return Err(Error::Scenario {
            phase: phase.into(),
            message: format!("levels {got:?}, expected {expected:?}"),
        });
    }
    Ok(())
}

/// Levels of the line at the end of the mirror phase: distance to the nearer
/// end of the chain.
pub fn line_rho1_levels(c: usize) -> Vec<Level> {
    let last = 2 * c + 3;
    (0..=last).map(|i| i.min(last - i) as Level).collect()
}

/// Drives `line(c)` through the mirror / honest / reset cycle `cycles` times.
///
/// The process at distance `c + 1` from `b` switches parent twice per cycle,
/// so the trace holds an unbounded number of radius-`c` disruptions.
pub fn replay_strong_impossibility(c: usize, cycles: usize) -> Result<Execution> {
    if cycles == 0 {
        return Err(Error::invalid("cycles must be at least 1"));
    }
    let (topo, fm) = build(&ScenarioParams::new(ScenarioKind::Line { c }))?;
    let b = 2 * c + 3;
    let mut init = corrupted_configuration(&topo);
    init.set(topo.root(), ProcessState::ROOT);
    init.set(b, ProcessState::ROOT);
    let mut exec = Execution::new(Arc::new(topo), fm, init, 0)?;

    let rho1 = line_rho1_levels(c);
    let rho2: Vec<Level> = (0..=b as Level).collect();
    settle(&mut exec, "rho1", ByzRole::MirrorRoot)?;
    expect_levels(&exec, "rho1", &rho1)?;
    for _ in 0..cycles {
        settle(&mut exec, "rho2", ByzRole::Honest)?;
        expect_levels(&exec, "rho2", &rho2)?;
        byz_write(&mut exec, b, ProcessState::ROOT)?;
        settle(&mut exec, "rho3", ByzRole::Still)?;
        expect_levels(&exec, "rho3", &rho1)?;
    }
    exec.meta.push(("scenario".into(), format!("strong-impossibility c={c} cycles={cycles}")));
    Ok(exec)
}

/// Drives the hexagon between the configuration where `v, v'` hang off `b`
/// and the one where they hang off `u, u'`, `cycles` times. Both `v` and `v'`
/// change parent in every half-cycle, so any area that misses one of them
/// sees an unbounded number of disruptions.
pub fn replay_ta_strong_impossibility(area: &ProcessSet, cycles: usize) -> Result<Execution> {
    use hexagon::*;
    if cycles == 0 {
        return Err(Error::invalid("cycles must be at least 1"));
    }
    let full: ProcessSet = [V, V_PRIME].into();
    if !area.is_subset(&full) || *area == full {
        return Err(Error::invalid(format!(
            "area must be a proper subset of {{{V}, {V_PRIME}}}, got {area:?}"
        )));
    }
    let (topo, fm) = build(&ScenarioParams::new(ScenarioKind::Hexagon))?;
    let rho1 = Configuration::from_states(vec![
        ProcessState::ROOT,
        ProcessState::new(Some(R), 1),
        ProcessState::new(Some(R), 1),
        ProcessState::new(Some(B), 1),
        ProcessState::new(Some(B), 1),
        ProcessState::ROOT,
    ]);
    let mut exec = Execution::new(Arc::new(topo), fm, rho1.clone(), 0)?;
    for _ in 0..cycles {
        byz_write(&mut exec, B, ProcessState::new(Some(V), 3))?;
        settle(&mut exec, "rho2", ByzRole::Still)?;
        expect_levels(&exec, "rho2", &[0, 1, 1, 2, 2, 3])?;
        byz_write(&mut exec, B, ProcessState::ROOT)?;
        settle(&mut exec, "rho3", ByzRole::Still)?;
        if *exec.last_configuration() != rho1 {
            return Err(Error::Scenario {
                phase: "rho3".into(),
                message: "did not return to the starting configuration".into(),
            });
        }
    }
    let ids: Vec<String> = area.iter().map(ToString::to_string).collect();
    exec.meta.push((
        "scenario".into(),
        format!("ta-strong-impossibility area={} cycles={cycles}", ids.join(",")),
    ));
    Ok(exec)
}
