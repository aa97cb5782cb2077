use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use super::{
    areas_report, cmd_exhaustive, cmd_run, cmd_sweep, parse_grid, random_grid, ExhaustiveOptions,
    RunConfig,
};
use crate::analysis::{measure, segment_disruptions};
use crate::format;
use crate::graph::{radius_area, FaultModel, ProcessId, ProcessSet, Topology};
use crate::scenarios::{self, ScenarioParams};

#[derive(Parser)]
#[command(name = "ssbfs", version, about = "Simulate and check the min+1 BFS spanning tree protocol under Byzantine faults")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one execution, measure it and write artifacts.
    Run(RunArgs),
    /// Run a grid of executions and write one metrics row per run.
    Sweep(SweepArgs),
    /// Check every small connected graph and fault placement.
    Exhaustive(ExhaustiveArgs),
    /// Re-check every transition of a recorded trace.
    Replay(ReplayArgs),
    /// Print the containment areas of a topology and fault placement.
    Areas(TopologyArgs),
    /// Write a scenario's topology file.
    Export(ExportArgs),
    /// Replay one of the unbounded-disruption constructions.
    Impossibility(ImpossibilityArgs),
}

#[derive(Args, Clone, Default)]
struct TopologyArgs {
    /// Scenario spec, e.g. `hexagon` or `random n=10 p=0.3 seed=4 faults=2`.
    #[arg(long)]
    scenario: Option<String>,
    /// Topology file (`n root` then one `u v` edge per line).
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Byzantine ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    byz: Option<Vec<ProcessId>>,
}

impl TopologyArgs {
    fn load(&self) -> anyhow::Result<(Topology, FaultModel)> {
        let config = RunConfig {
            scenario: self.scenario.clone(),
            topology: self.topology.clone(),
            byzantine: self.byz.clone(),
            ..RunConfig::default()
        };
        Ok(config.build_topology()?)
    }
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    topology: TopologyArgs,
    /// silent | fake-root | mirror-root | honest | oscillator[:period] | random[:seed] | scripted
    #[arg(long)]
    adversary: Option<String>,
    /// Script of `step id prnt level` lines for the scripted adversary.
    #[arg(long)]
    script: Option<PathBuf>,
    /// central | distributed | synchronous
    #[arg(long)]
    daemon: Option<String>,
    /// random | round-robin
    #[arg(long)]
    fairness: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// zero | corrupted | random | file
    #[arg(long)]
    init: Option<String>,
    /// Configuration records (`id prnt level`) for `--init file`.
    #[arg(long)]
    init_file: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long)]
    check_closure: bool,
    #[arg(long)]
    check_bounds: bool,
    #[arg(long)]
    check_containment: bool,
    #[arg(long)]
    check_convergence: bool,
    /// Enable every check.
    #[arg(long)]
    check_all: bool,
}

impl RunArgs {
    fn resolve(self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.topology.scenario.is_some() || self.topology.topology.is_some() {
            c.scenario = self.topology.scenario;
            c.topology = self.topology.topology;
        }
        macro_rules! overlay {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { c.$field = v; } )* };
        }
        macro_rules! overlay_opt {
            ($($field:ident),*) => { $( if self.$field.is_some() { c.$field = self.$field; } )* };
        }
        overlay!(adversary, daemon, fairness, seed, init);
        overlay_opt!(script, init_file, max_steps, trace, metrics, dot);
        if self.topology.byz.is_some() {
            c.byzantine = self.topology.byz;
        }
        c.check_closure |= self.check_closure || self.check_all;
        c.check_bounds |= self.check_bounds || self.check_all;
        c.check_containment |= self.check_containment || self.check_all;
        c.check_convergence |= self.check_convergence || self.check_all;
        Ok(c)
    }
}

#[derive(Args)]
struct SweepArgs {
    /// TOML grid: `[defaults]` plus `[[run]]` tables.
    #[arg(long, conflicts_with = "random_graphs")]
    grid: Option<PathBuf>,
    /// Generate a grid of this many random graphs instead.
    #[arg(long)]
    random_graphs: Option<usize>,
    #[arg(long, default_value_t = 10)]
    n_max: usize,
    #[arg(long, default_value_t = 0.4)]
    edge_prob: f64,
    /// Fault counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    faults: Vec<usize>,
    /// Seeds 1..=N per graph and fault count.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value = "oscillator")]
    adversary: String,
    /// Metrics CSV output (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExhaustiveArgs {
    #[arg(long)]
    n_max: usize,
    #[arg(long, default_value_t = 1)]
    f_max: usize,
    /// Only compute and print containment areas.
    #[arg(long)]
    areas_only: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    topology: TopologyArgs,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImpossibilityArgs {
    #[command(subcommand)]
    which: Construction,
    #[arg(long, default_value_t = 3, global = true)]
    cycles: usize,
    /// Write the replayed execution as a trace.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Construction {
    /// The line of 2c+4 processes and a radius-c area.
    Strong {
        #[arg(long, default_value_t = 1)]
        c: usize,
    },
    /// The hexagon and an area strictly inside {3, 4}.
    TaStrong {
        #[arg(long, value_delimiter = ',', default_value = "3")]
        area: Vec<ProcessId>,
    },
}

fn emit(out: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let config = args.resolve()?;
            let report = cmd_run(&config)?;
            let m = &report.metrics;
            let opt = |o: Option<usize>| o.map_or_else(|| "-".into(), |v| v.to_string());
            println!(
                "steps={} first_lc={} first_lc_star={} disruptions={} max_changes={}",
                report.execution.len(),
                opt(m.first_lc_index),
                opt(m.first_lc_star_index),
                m.disruption_count,
                report.row.max_changes
            );
            for v in &report.violations {
                eprintln!("violation: {v}");
            }
            Ok(report.passed())
        }
        Command::Sweep(args) => {
            let grid = match (&args.grid, args.random_graphs) {
                (Some(path), _) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    parse_grid(&text)?
                }
                (None, Some(graphs)) => {
                    let base = RunConfig {
                        adversary: args.adversary.clone(),
                        ..RunConfig::default().with_all_checks()
                    };
                    random_grid(graphs, args.n_max, args.edge_prob, &args.faults, args.seeds, &base)?
                }
                (None, None) => bail!("give --grid FILE or --random-graphs N"),
            };
            let rows = cmd_sweep(&grid)?;
            emit(args.out.as_ref(), &format::metrics_csv_string(&rows))?;
            let bad = rows.iter().filter(|r| r.status != "ok").count();
            eprintln!("{} rows, {bad} not ok", rows.len());
            Ok(bad == 0)
        }
        Command::Exhaustive(args) => {
            let report = cmd_exhaustive(&ExhaustiveOptions {
                n_max: args.n_max,
                f_max: args.f_max,
                areas_only: args.areas_only,
                seed: args.seed,
            })?;
            let set = |s: &ProcessSet| format!("{s:?}");
            for r in &report.areas {
                println!(
                    "n={} edges={:?} B={} S_B={} S_B*={} E_B={}",
                    r.n,
                    r.edges,
                    set(&r.byzantine),
                    set(&r.areas.s_b),
                    set(&r.areas.s_b_star),
                    set(&r.areas.e_b)
                );
            }
            for f in &report.failures {
                println!("FAIL {f}");
            }
            println!(
                "graphs={} placements={} runs={} failures={}",
                report.graphs,
                report.placements,
                report.runs,
                report.failures.len()
            );
            Ok(report.passed())
        }
        Command::Replay(args) => {
            let (topo, _) = args.topology.load()?;
            let text = fs::read_to_string(&args.trace)
                .with_context(|| format!("reading {}", args.trace.display()))?;
            let exec = format::read_trace(&text, Arc::new(topo))?;
            match exec.replay() {
                Ok(()) => {
                    println!("ok: {} steps replayed", exec.len());
                    Ok(true)
                }
                Err(d) => {
                    println!("diverged at step {}: {}", d.index, d.reason);
                    Ok(false)
                }
            }
        }
        Command::Areas(args) => {
            let (topo, fm) = args.load()?;
            print!("{}", areas_report(&topo, &fm)?);
            Ok(true)
        }
        Command::Export(args) => {
            let params: ScenarioParams = args.scenario.parse()?;
            let (topo, fm) = scenarios::build(&params)?;
            emit(args.out.as_ref(), &format::write_topology(&topo, Some(&fm)))?;
            Ok(true)
        }
        Command::Impossibility(args) => {
            let (exec, area, label) = match args.which {
                Construction::Strong { c } => {
                    let exec = scenarios::replay_strong_impossibility(c, args.cycles)?;
                    let area = radius_area(exec.topology(), exec.faults(), c as u32);
                    (exec, area, format!("radius-{c}"))
                }
                Construction::TaStrong { area } => {
                    let area: ProcessSet = area.into_iter().collect();
                    let exec = scenarios::replay_ta_strong_impossibility(&area, args.cycles)?;
                    (exec, area.clone(), format!("area {area:?}"))
                }
            };
            let small = segment_disruptions(&exec, &area)?.len();
            let metrics = measure(&exec)?;
            println!("steps={} {label} disruptions={small}", exec.len());
            println!(
                "S_B* disruptions after containment={} (2m = {})",
                metrics.disruption_count,
                2 * exec.topology().edge_count()
            );
            if let Some(path) = &args.trace {
                fs::write(path, format::trace_to_string(&exec))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(true)
        }
    }
}

/// Entry point of the `ssbfs` binary. Exit status 0 when every enabled
/// check passed, 1 when some check failed, 2 on errors.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
