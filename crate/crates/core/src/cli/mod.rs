//! Command implementations behind the `ssbfs` binary.
//!
//! Every command is a plain function of its configuration so that tests and
//! other front ends can call it without going through argument parsing.

mod args;
mod exhaustive;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{parse_script, Adversary, AdversaryKind};
use crate::analysis::{self, StabilizationMetrics, Violation};
use crate::error::{Error, Result};
use crate::format::{self, MetricsRow};
use crate::graph::{FaultModel, ProcessId, Topology};
use crate::protocol::{Configuration, ProcessState};
use crate::scenarios::{self, ByzPlacement, ScenarioParams};
use crate::scheduler::{self, DaemonKind, DaemonPolicy, Execution, Fairness, StopCriterion};

pub use args::main;
pub use exhaustive::{cmd_exhaustive, connected_edge_sets, AreaRecord, ExhaustiveOptions, ExhaustiveReport};

/// Everything that determines a run. Loadable from TOML (kebab-case keys);
/// command-line flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    /// Scenario spec such as `hexagon` or `random n=10 p=0.3 seed=4 faults=2`.
    pub scenario: Option<String>,
    /// Topology file, used instead of `scenario`.
    pub topology: Option<PathBuf>,
    /// Byzantine ids; overrides the scenario's or the file's placement.
    pub byzantine: Option<Vec<ProcessId>>,
    /// `silent`, `fake-root`, `mirror-root`, `honest`, `oscillator[:period]`,
    /// `random[:seed]` or `scripted` (with `script`). A bare `random` is
    /// seeded with `seed`.
    pub adversary: String,
    pub script: Option<PathBuf>,
    /// `central`, `distributed` or `synchronous`.
    pub daemon: String,
    /// `random` (seeded with `seed`) or `round-robin`.
    pub fairness: String,
    pub seed: u64,
    /// `zero`, `corrupted`, `random` or `file` (with `init-file`).
    pub init: String,
    pub init_file: Option<PathBuf>,
    /// Defaults to `50·n·m`.
    pub max_steps: Option<usize>,
    pub trace: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub dot: Option<PathBuf>,
    pub check_closure: bool,
    pub check_bounds: bool,
    pub check_containment: bool,
    pub check_convergence: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: None,
            topology: None,
            byzantine: None,
            adversary: "oscillator".into(),
            script: None,
            daemon: "distributed".into(),
            fairness: "random".into(),
            seed: 0,
            init: "random".into(),
            init_file: None,
            max_steps: None,
            trace: None,
            metrics: None,
            dot: None,
            check_closure: false,
            check_bounds: false,
            check_containment: false,
            check_convergence: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read(path)?)
    }

    pub fn scenario(spec: &str) -> Self {
        RunConfig {
            scenario: Some(spec.into()),
            ..Self::default()
        }
    }

    pub fn with_all_checks(mut self) -> Self {
        self.check_closure = true;
        self.check_bounds = true;
        self.check_containment = true;
        self.check_convergence = true;
        self
    }

    /// Label used for the `scenario` column of metrics rows.
    pub fn scenario_id(&self) -> String {
        match (&self.scenario, &self.topology) {
            (Some(spec), _) => spec
                .parse::<ScenarioParams>()
                .map_or_else(|_| spec.clone(), |p| p.to_string()),
            (None, Some(path)) => format!("file:{}", path.display()),
            (None, None) => "-".into(),
        }
    }

    fn daemon_policy(&self) -> Result<DaemonPolicy> {
        let kind: DaemonKind = self.daemon.parse()?;
        let fairness = match self.fairness.as_str() {
            "random" => Fairness::Random { seed: self.seed },
            "round-robin" => Fairness::RoundRobin,
            other => return Err(Error::invalid(format!("unknown fairness `{other}`"))),
        };
        Ok(DaemonPolicy { kind, fairness })
    }

    fn adversary_kind(&self) -> Result<AdversaryKind> {
        match self.adversary.as_str() {
            "random" => Ok(AdversaryKind::Random { seed: self.seed }),
            "scripted" => {
                let path = self
                    .script
                    .as_ref()
                    .ok_or_else(|| Error::invalid("the scripted adversary needs `script`"))?;
                Ok(AdversaryKind::Scripted(parse_script(&read(path)?)?))
            }
            other => other.parse(),
        }
    }

    fn build_topology(&self) -> Result<(Topology, FaultModel)> {
        match (&self.scenario, &self.topology) {
            (Some(_), Some(_)) => Err(Error::invalid("give either a scenario or a topology file, not both")),
            (None, None) => Err(Error::invalid("no scenario or topology file given")),
            (Some(spec), None) => {
                let mut params: ScenarioParams = spec.parse()?;
                if let Some(ids) = &self.byzantine {
                    params.byz = ByzPlacement::Explicit(ids.clone());
                }
                scenarios::build(&params)
            }
            (None, Some(path)) => {
                let (topo, file_byz) = format::parse_topology(&read(path)?)?;
                let ids = self.byzantine.clone().or(file_byz).unwrap_or_default();
                let fm = FaultModel::new(&topo, ids)?;
                Ok((topo, fm))
            }
        }
    }

    fn initial_configuration(&self, topo: &Topology, fm: &FaultModel) -> Result<Configuration> {
        let mut cfg = match self.init.as_str() {
            "zero" => Configuration::uniform(topo.process_count(), ProcessState::ROOT),
            "corrupted" => scenarios::corrupted_configuration(topo),
            "random" => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                scenarios::random_configuration(topo, &mut rng)
            }
            "file" => {
                let path = self
                    .init_file
                    .as_ref()
                    .ok_or_else(|| Error::invalid("init `file` needs `init-file`"))?;
                format::parse_configuration(&read(path)?, topo.process_count())?
            }
            other => return Err(Error::invalid(format!("unknown init `{other}`"))),
        };
        cfg.normalize(topo, fm);
        Ok(cfg)
    }

    /// Header lines identifying the run; output paths are left out since
    /// they do not affect the execution.
    fn stamp(&self, fm: &FaultModel, daemon: &DaemonPolicy, adversary: &AdversaryKind, max_steps: usize) -> Vec<(String, String)> {
        let byz: Vec<String> = fm.byzantine().iter().map(ToString::to_string).collect();
        let mut checks = Vec::new();
        for (on, name) in [
            (self.check_closure, "closure"),
            (self.check_bounds, "bounds"),
            (self.check_containment, "containment"),
            (self.check_convergence, "convergence"),
        ] {
            if on {
                checks.push(name);
            }
        }
        let init = match (&self.init_file, self.init.as_str()) {
            (Some(path), "file") => format!("file:{}", path.display()),
            (_, other) => other.to_string(),
        };
        vec![
            ("scenario".into(), self.scenario_id()),
            ("byzantine".into(), if byz.is_empty() { "-".into() } else { byz.join(",") }),
            ("adversary".into(), adversary.to_string()),
            ("daemon".into(), daemon.to_string()),
            ("init".into(), init),
            ("max-steps".into(), max_steps.to_string()),
            ("checks".into(), if checks.is_empty() { "-".into() } else { checks.join(",") }),
        ]
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Outcome of one run, before any artifact is written.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub execution: Execution,
    pub metrics: StabilizationMetrics,
    /// Failures of the enabled checks only.
    pub violations: Vec<Violation>,
    pub row: MetricsRow,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs, measures and checks `config` without writing anything.
pub fn execute(config: &RunConfig) -> Result<RunReport> {
    let (topo, fm) = config.build_topology()?;
    let init = config.initial_configuration(&topo, &fm)?;
    let daemon = config.daemon_policy()?;
    let kind = config.adversary_kind()?;
    let max_steps = config.max_steps.unwrap_or_else(|| scheduler::default_budget(&topo));
    let meta = config.stamp(&fm, &daemon, &kind, max_steps);

    let mut execution = scheduler::run(
        Arc::new(topo),
        fm,
        init,
        daemon,
        &mut Adversary::new(kind),
        StopCriterion::MaxSteps(max_steps),
        config.seed,
    )?;
    execution.meta = meta;
    let metrics = analysis::measure(&execution)?;

    let mut violations = Vec::new();
    if config.check_closure {
        violations.extend(analysis::check_closure(&execution));
    }
    if config.check_containment {
        violations.extend(analysis::check_containment(&execution, &metrics));
    }
    if config.check_bounds {
        violations.extend(analysis::check_bounds(&execution, &metrics));
    }
    if config.check_convergence {
        violations.extend(analysis::check_convergence(&execution, &metrics));
    }
    let status = if violations.is_empty() {
        "ok".to_string()
    } else {
        let all: Vec<String> = violations.iter().map(ToString::to_string).collect();
        format!("violation: {}", all.join(" | "))
    };
    let row = MetricsRow::from_metrics(&config.scenario_id(), &execution, &metrics, status);
    Ok(RunReport {
        execution,
        metrics,
        violations,
        row,
    })
}

/// [`execute`] plus the trace, metrics and DOT artifacts named in `config`.
pub fn cmd_run(config: &RunConfig) -> Result<RunReport> {
    let report = execute(config)?;
    let exec = &report.execution;
    if let Some(path) = &config.trace {
        write(path, format::trace_to_string(exec).as_bytes())?;
    }
    if let Some(path) = &config.metrics {
        write(path, format::metrics_csv_string(std::slice::from_ref(&report.row)).as_bytes())?;
    }
    if let Some(path) = &config.dot {
        let dot = format::to_dot(
            exec.topology(),
            exec.faults(),
            &report.metrics.areas,
            exec.last_configuration(),
        );
        write(path, dot.as_bytes())?;
    }
    Ok(report)
}

/// Runs every config (in parallel) and returns one row each, sorted by
/// scenario id then seed. A failing run becomes an error row.
pub fn cmd_sweep(grid: &[RunConfig]) -> Result<Vec<MetricsRow>> {
    if grid.is_empty() {
        return Err(Error::invalid("empty sweep grid"));
    }
    let mut rows: Vec<MetricsRow> = grid
        .par_iter()
        .map(|config| {
            execute(config).map_or_else(
                |e| MetricsRow::error(&config.scenario_id(), config.seed, &e.to_string()),
                |report| report.row,
            )
        })
        .collect();
    rows.sort_by(|a, b| (&a.scenario, a.seed).cmp(&(&b.scenario, b.seed)));
    Ok(rows)
}

/// Sweep grid file: an optional `[defaults]` table merged under every
/// `[[run]]` table.
pub fn parse_grid(text: &str) -> Result<Vec<RunConfig>> {
    let doc: toml::Table = text
        .parse()
        .map_err(|e| Error::invalid(format!("grid: {e}")))?;
    let defaults = match doc.get("defaults") {
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(Error::invalid("grid: `defaults` must be a table")),
        None => toml::Table::new(),
    };
    if let Some(key) = doc.keys().find(|k| *k != "defaults" && *k != "run") {
        return Err(Error::invalid(format!("grid: unknown key `{key}`")));
    }
    let runs = match doc.get("run") {
        Some(toml::Value::Array(items)) => items.clone(),
        Some(_) => return Err(Error::invalid("grid: `run` must be an array of tables")),
        None => Vec::new(),
    };
    runs.into_iter()
        .enumerate()
        .map(|(i, item)| {
            let toml::Value::Table(entry) = item else {
                return Err(Error::invalid(format!("grid: run #{} is not a table", i + 1)));
            };
            let mut merged = defaults.clone();
            merged.extend(entry);
            toml::Value::Table(merged)
                .try_into()
                .map_err(|e| Error::invalid(format!("grid: run #{}: {e}", i + 1)))
        })
        .collect()
}

/// Random-graph sweep: `graphs` graphs with `3 ≤ n ≤ n_max`, each with every
/// fault count in `faults` and seeds `1..=seeds`, all checks enabled.
pub fn random_grid(
    graphs: usize,
    n_max: usize,
    edge_prob: f64,
    faults: &[usize],
    seeds: u64,
    base: &RunConfig,
) -> Result<Vec<RunConfig>> {
    if n_max < 3 {
        return Err(Error::invalid("random sweeps need n_max ≥ 3"));
    }
    let mut grid = Vec::new();
    for g in 0..graphs {
        let n = 3 + g % (n_max - 2);
        for &f in faults {
            for seed in 1..=seeds {
                grid.push(RunConfig {
                    scenario: Some(format!(
                        "random n={n} p={edge_prob} seed={g} faults={f} byz-seed={g}"
                    )),
                    seed,
                    ..base.clone()
                });
            }
        }
    }
    Ok(grid)
}

/// `S_B`, `S_B*` and `E_B` as printable lines.
pub fn areas_report(topo: &Topology, fm: &FaultModel) -> Result<String> {
    let areas = crate::graph::compute_containment_areas(topo, fm)?;
    let fmt = |s: &crate::graph::ProcessSet| {
        let ids: Vec<String> = s.iter().map(ToString::to_string).collect();
        format!("{{{}}}", ids.join(", "))
    };
    Ok(format!(
        "B    = {}\nS_B  = {}\nS_B* = {}\nE_B  = {}\n",
        fmt(fm.byzantine()),
        fmt(&areas.s_b),
        fmt(&areas.s_b_star),
        fmt(&areas.e_b)
    ))
}
