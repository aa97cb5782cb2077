//! Byzantine behavior strategies.
//!
//! A strategy is consulted once per step, before the daemon picks its
//! activation set, and proposes a new state for some Byzantine processes.
//! Proposals that would not change anything are dropped by the engine.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::protocol::{self, ByzantineWrites, Level, ProcessState};
use crate::scheduler::Execution;
use crate::graph::ProcessId;

/// One line of a scripted strategy: at `step`, process `id` takes `state`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedWrite {
    pub step: usize,
    pub id: ProcessId,
    pub state: ProcessState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversaryKind {
    /// Never writes.
    Silent,
    /// Pins every Byzantine process at `(⊥, 0)`.
    FakeRoot,
    /// Copies the root's state one step after the root acts.
    MirrorRoot,
    /// Alternates `(⊥, 0)` and `(N_b(1), 2n)` every `period` steps.
    Oscillator { period: usize },
    /// Uniform level in `[0, 2D]`, uniform parent in `N_b ∪ {⊥}`.
    Random { seed: u64 },
    Scripted(Vec<ScriptedWrite>),
    /// Runs the protocol faithfully, as a correct non-root process would.
    Honest,
}

impl AdversaryKind {
    pub fn oscillator() -> Self {
        AdversaryKind::Oscillator { period: 1 }
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryKind::Silent => write!(f, "silent"),
            AdversaryKind::FakeRoot => write!(f, "fake-root"),
            AdversaryKind::MirrorRoot => write!(f, "mirror-root"),
            AdversaryKind::Oscillator { period } => write!(f, "oscillator:{period}"),
            AdversaryKind::Random { seed } => write!(f, "random:{seed}"),
            AdversaryKind::Scripted(writes) => write!(f, "scripted:{}", writes.len()),
            AdversaryKind::Honest => write!(f, "honest"),
        }
    }
}

impl FromStr for AdversaryKind {
    type Err = Error;

    /// Accepts `silent`, `fake-root`, `mirror-root`, `honest`,
    /// `oscillator[:period]` and `random[:seed]`. Scripted strategies are
    /// loaded from files instead.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((name, arg)) => (name, Some(arg)),
            None => (s, None),
        };
        let number = |default: u64| -> Result<u64> {
            arg.map_or(Ok(default), |a| {
                a.parse()
                    .map_err(|_| Error::invalid(format!("bad adversary parameter `{a}`")))
            })
        };
        match name.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "silent" => Ok(AdversaryKind::Silent),
            "fake-root" => Ok(AdversaryKind::FakeRoot),
            "mirror-root" => Ok(AdversaryKind::MirrorRoot),
            "honest" => Ok(AdversaryKind::Honest),
            "oscillator" => {
                let period = number(1)? as usize;
                if period == 0 {
                    return Err(Error::invalid("oscillator period must be positive"));
                }
                Ok(AdversaryKind::Oscillator { period })
            }
            "random" => Ok(AdversaryKind::Random { seed: number(0)? }),
            other => Err(Error::invalid(format!("unknown adversary `{other}`"))),
        }
    }
}

/// A strategy plus its private memory.
#[derive(Debug, Clone)]
pub struct Adversary {
    kind: AdversaryKind,
    rng: Option<ChaCha8Rng>,
}

impl Adversary {
    pub fn new(kind: AdversaryKind) -> Self {
        let rng = match kind {
            AdversaryKind::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Adversary { kind, rng }
    }

    pub fn kind(&self) -> &AdversaryKind {
        &self.kind
    }

    /// Whether the strategy has nothing left to do of its own accord once the
    /// correct processes are quiet. Reactive strategies are always finished;
    /// perpetual ones never are.
    pub fn finished(&self, next_step: usize) -> bool {
        match &self.kind {
            AdversaryKind::Oscillator { .. } | AdversaryKind::Random { .. } => false,
            AdversaryKind::Scripted(writes) => writes.iter().all(|w| w.step < next_step),
            _ => true,
        }
    }

    /// Proposed writes for the step that extends `prefix`.
    pub fn advise(&mut self, prefix: &Execution) -> Result<ByzantineWrites> {
        let topo = prefix.topology();
        let fm = prefix.faults();
        let cfg = prefix.last_configuration();
        let step = prefix.len() + 1;
        let byzantine = fm.byzantine().iter().copied();

        let writes = match &self.kind {
            AdversaryKind::Silent => ByzantineWrites::new(),
            AdversaryKind::FakeRoot => byzantine.map(|b| (b, ProcessState::ROOT)).collect(),
            AdversaryKind::MirrorRoot => {
                let root = topo.root();
                let root_acted = prefix
                    .steps()
                    .last()
                    .is_some_and(|s| s.activated.contains(&root));
                if root_acted {
                    byzantine.map(|b| (b, cfg.get(root))).collect()
                } else {
                    ByzantineWrites::new()
                }
            }
            AdversaryKind::Oscillator { period } => {
                let high = ((step - 1) / period) % 2 == 1;
                let large = 2 * topo.process_count() as Level;
                byzantine
                    .map(|b| {
                        let state = match topo.neighbors(b).first() {
                            Some(&p) if high => ProcessState::new(Some(p), large),
                            _ => ProcessState::ROOT,
                        };
                        (b, state)
                    })
                    .collect()
            }
            AdversaryKind::Random { .. } => {
                let rng = self.rng.as_mut().expect("random strategy owns an rng");
                let max_level = 2 * topo.diameter() as Level;
                byzantine
                    .map(|b| {
                        let nbrs = topo.neighbors(b);
                        let pick = rng.gen_range(0..=nbrs.len());
                        let prnt = (pick < nbrs.len()).then(|| nbrs[pick]);
                        (b, ProcessState::new(prnt, rng.gen_range(0..=max_level)))
                    })
                    .collect()
            }
            AdversaryKind::Scripted(entries) => {
                let mut writes = ByzantineWrites::new();
                for w in entries.iter().filter(|w| w.step == step) {
                    if !fm.is_byzantine(w.id) {
                        return Err(Error::contract(format!(
                            "scripted write at step {} targets correct process {}",
                            w.step, w.id
                        )));
                    }
                    writes.insert(w.id, w.state);
                }
                writes
            }
            AdversaryKind::Honest => byzantine
                .filter(|&b| protocol::is_enabled(topo, cfg, b))
                .map(|b| (b, protocol::fire(topo, cfg, b)))
                .collect(),
        };
        Ok(writes)
    }
}

/// Parses a script of `step id prnt level` lines (`prnt = -1` for `⊥`).
pub fn parse_script(text: &str) -> Result<Vec<ScriptedWrite>> {
    let mut writes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [step, id, prnt, level] = fields[..] else {
            return Err(Error::parse(idx + 1, "expected `step id prnt level`"));
        };
        let num = |s: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::parse(idx + 1, format!("`{s}` is not a number")))
        };
        let prnt = crate::format::parse_prnt(prnt).map_err(|m| Error::parse(idx + 1, m))?;
        writes.push(ScriptedWrite {
            step: num(step)? as usize,
            id: num(id)? as usize,
            state: ProcessState::new(prnt, num(level)?),
        });
    }
    Ok(writes)
}
