//! Text formats: topology files, configuration records, traces, metrics CSV
//! and DOT export.
//!
//! Topology file:
//!
//! ```text
//! 6 0          # n root
//! 0 1          # one edge per line; neighbor order = order of appearance
//! ...
//! byz 5        # optional Byzantine placement
//! ```
//!
//! Configuration records are `id prnt level` lines with `prnt = -1` for `⊥`.
//!
//! A trace is a header (`ssbfs-trace 1`, seed, topology hash, metadata, one
//! `init` record per process) followed by one `step` line per transition:
//!
//! ```text
//! step 3 act=1,4 byz=5:-1:0 chg=1:0:1,4:2:2,5:-1:0
//! ```
//!
//! Every state that changed is listed in `chg`, so a trace can be rebuilt and
//! then checked with [`Execution::replay`].

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::analysis::StabilizationMetrics;
use crate::error::{Error, Result};
use crate::graph::{ContainmentAreas, FaultModel, ProcessId, Topology};
use crate::protocol::{ByzantineWrites, Configuration, ProcessState};
use crate::scheduler::{Execution, StepRecord, Termination};

const TRACE_MAGIC: &str = "ssbfs-trace 1";

pub(crate) fn parse_prnt(token: &str) -> std::result::Result<Option<ProcessId>, String> {
    if token == "-1" {
        return Ok(None);
    }
    token
        .parse()
        .map(Some)
        .map_err(|_| format!("`{token}` is not a parent id (use -1 for none)"))
}

fn fmt_prnt(prnt: Option<ProcessId>) -> String {
    prnt.map_or_else(|| "-1".to_string(), |p| p.to_string())
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn number<T: std::str::FromStr>(line: usize, token: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::parse(line, format!("`{token}` is not a valid number")))
}

/// Parses a topology file; returns the Byzantine ids of a `byz` line if present.
pub fn parse_topology(text: &str) -> Result<(Topology, Option<Vec<ProcessId>>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l)))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty topology file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [n, root] = fields[..] else {
        return Err(Error::parse(hline, "expected `n root_id`"));
    };
    let (n, root): (usize, usize) = (number(hline, n)?, number(hline, root)?);

    let mut edges = Vec::new();
    let mut byz = None;
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "byz" {
            let ids = fields[1..]
                .iter()
                .map(|t| number(lineno, t))
                .collect::<Result<Vec<usize>>>()?;
            byz = Some(ids);
            continue;
        }
        let [u, v] = fields[..] else {
            return Err(Error::parse(lineno, "expected an edge `u v`"));
        };
        edges.push((number(lineno, u)?, number(lineno, v)?));
    }
    Ok((Topology::new(n, root, edges)?, byz))
}

pub fn write_topology(topo: &Topology, faults: Option<&FaultModel>) -> String {
    let mut out = format!("{} {}\n", topo.process_count(), topo.root());
    for (u, v) in topo.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    if let Some(fm) = faults.filter(|fm| fm.fault_count() > 0) {
        let ids: Vec<String> = fm.byzantine().iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "byz {}", ids.join(" "));
    }
    out
}

/// Short stable fingerprint of the topology (SHA-256 of its file form).
pub fn topology_hash(topo: &Topology) -> String {
    let digest = Sha256::digest(write_topology(topo, None).as_bytes());
    hex::encode(&digest[..8])
}

fn parse_record(line: usize, text: &str) -> Result<(ProcessId, ProcessState)> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    let [id, prnt, level] = fields[..] else {
        return Err(Error::parse(line, "expected `id prnt level`"));
    };
    let prnt = parse_prnt(prnt).map_err(|m| Error::parse(line, m))?;
    Ok((number(line, id)?, ProcessState::new(prnt, number(line, level)?)))
}

/// Parses `id prnt level` records; every process must appear exactly once.
pub fn parse_configuration(text: &str, n: usize) -> Result<Configuration> {
    let mut states: Vec<Option<ProcessState>> = vec![None; n];
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let (id, state) = parse_record(idx + 1, line)?;
        let slot = states
            .get_mut(id)
            .ok_or_else(|| Error::parse(idx + 1, format!("process {id} out of range (n = {n})")))?;
        if slot.replace(state).is_some() {
            return Err(Error::parse(idx + 1, format!("duplicate record for process {id}")));
        }
    }
    let states = states
        .into_iter()
        .enumerate()
        .map(|(v, s)| s.ok_or_else(|| Error::invalid(format!("no record for process {v}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Configuration::from_states(states))
}

pub fn write_configuration(cfg: &Configuration) -> String {
    cfg.states()
        .iter()
        .enumerate()
        .map(|(v, s)| format!("{v} {s}\n"))
        .collect()
}

fn fmt_assignments<'a>(items: impl Iterator<Item = (ProcessId, &'a ProcessState)>) -> String {
    let parts: Vec<String> = items
        .map(|(v, s)| format!("{v}:{}:{}", fmt_prnt(s.prnt), s.level))
        .collect();
    if parts.is_empty() {
        "-".into()
    } else {
        parts.join(",")
    }
}

fn parse_assignments(line: usize, text: &str) -> Result<Vec<(ProcessId, ProcessState)>> {
    if text == "-" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|item| {
            let parts: Vec<&str> = item.split(':').collect();
            let [id, prnt, level] = parts[..] else {
                return Err(Error::parse(line, format!("bad assignment `{item}`")));
            };
            let prnt = parse_prnt(prnt).map_err(|m| Error::parse(line, m))?;
            Ok((number(line, id)?, ProcessState::new(prnt, number(line, level)?)))
        })
        .collect()
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Quiescent => "quiescent",
        Termination::BudgetExhausted => "budget",
        Termination::PredicateMet => "predicate",
        Termination::ScriptExhausted => "script",
        Termination::Manual => "manual",
    }
}

fn parse_termination(line: usize, s: &str) -> Result<Termination> {
    Ok(match s {
        "quiescent" => Termination::Quiescent,
        "budget" => Termination::BudgetExhausted,
        "predicate" => Termination::PredicateMet,
        "script" => Termination::ScriptExhausted,
        "manual" => Termination::Manual,
        other => return Err(Error::parse(line, format!("unknown termination `{other}`"))),
    })
}

pub fn write_trace(exec: &Execution, out: &mut impl Write) -> Result<()> {
    let topo = exec.topology();
    writeln!(out, "{TRACE_MAGIC}")?;
    writeln!(out, "seed {}", exec.seed)?;
    writeln!(out, "topology {}", topology_hash(topo))?;
    writeln!(out, "n {}", topo.process_count())?;
    let byz: Vec<String> = exec.faults().byzantine().iter().map(ToString::to_string).collect();
    writeln!(out, "byz {}", if byz.is_empty() { "-".into() } else { byz.join(",") })?;
    for (key, value) in &exec.meta {
        writeln!(out, "meta {key} {value}")?;
    }
    for (v, s) in exec.initial().states().iter().enumerate() {
        writeln!(out, "init {v} {s}")?;
    }
    for (idx, record) in exec.steps().iter().enumerate() {
        let before = exec.configuration(idx);
        let act: Vec<String> = record.activated.iter().map(ToString::to_string).collect();
        let changed = before.diff(&record.config).collect::<Vec<_>>();
        writeln!(
            out,
            "step {} act={} byz={} chg={}",
            idx + 1,
            if act.is_empty() { "-".into() } else { act.join(",") },
            fmt_assignments(record.byz_writes.iter().map(|(v, s)| (*v, s))),
            fmt_assignments(changed.iter().map(|&v| (v, &record.config.states()[v]))),
        )?;
    }
    writeln!(out, "end {}", termination_name(exec.termination))?;
    Ok(())
}

pub fn trace_to_string(exec: &Execution) -> String {
    let mut buf = Vec::new();
    write_trace(exec, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("trace is ASCII")
}

/// Rebuilds an execution from its trace. Transitions are taken from the
/// stored changes, not recomputed; call [`Execution::replay`] to check them.
pub fn read_trace(text: &str, topology: Arc<Topology>) -> Result<Execution> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
    match lines.next() {
        Some((_, TRACE_MAGIC)) => {}
        _ => return Err(Error::parse(1, format!("missing `{TRACE_MAGIC}` header"))),
    }
    let n = topology.process_count();
    let mut seed = 0;
    let mut byz = Vec::new();
    let mut meta = Vec::new();
    let mut init: Vec<Option<ProcessState>> = vec![None; n];
    let mut exec: Option<Execution> = None;
    let mut termination = Termination::Manual;

    for (lineno, line) in lines {
        let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
        match tag {
            "" => {}
            "seed" => seed = number(lineno, rest)?,
            "topology" => {
                let expected = topology_hash(&topology);
                if rest != expected {
                    return Err(Error::invalid(format!(
                        "trace was recorded on topology {rest}, not {expected}"
                    )));
                }
            }
            "n" => {
                if number::<usize>(lineno, rest)? != n {
                    return Err(Error::parse(lineno, "process count differs from the topology"));
                }
            }
            "byz" if rest != "-" => {
                byz = rest
                    .split(',')
                    .map(|t| number(lineno, t))
                    .collect::<Result<Vec<usize>>>()?;
            }
            "byz" => {}
            "meta" => {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.push((k.to_string(), v.to_string()));
            }
            "init" => {
                let (v, s) = parse_record(lineno, rest)?;
                *init
                    .get_mut(v)
                    .ok_or_else(|| Error::parse(lineno, format!("process {v} out of range")))? = Some(s);
            }
            "step" => {
                if exec.is_none() {
                    let states = init
                        .iter()
                        .enumerate()
                        .map(|(v, s)| s.ok_or_else(|| Error::invalid(format!("no init record for {v}"))))
                        .collect::<Result<Vec<_>>>()?;
                    let fm = FaultModel::new(&topology, byz.iter().copied())?;
                    exec = Some(Execution::new(
                        topology.clone(),
                        fm,
                        Configuration::from_states(states),
                        seed,
                    )?);
                }
                let e = exec.as_mut().expect("created above");
                let record = parse_step(lineno, rest, e)?;
                e.push_unchecked(record);
            }
            "end" => termination = parse_termination(lineno, rest)?,
            other => return Err(Error::parse(lineno, format!("unknown record `{other}`"))),
        }
    }

    let mut exec = match exec {
        Some(e) => e,
        None => {
            let states = init
                .iter()
                .enumerate()
                .map(|(v, s)| s.ok_or_else(|| Error::invalid(format!("no init record for {v}"))))
                .collect::<Result<Vec<_>>>()?;
            let fm = FaultModel::new(&topology, byz.iter().copied())?;
            Execution::new(topology, fm, Configuration::from_states(states), seed)?
        }
    };
    exec.meta = meta;
    exec.termination = termination;
    Ok(exec)
}

fn parse_step(line: usize, rest: &str, exec: &Execution) -> Result<StepRecord> {
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let [index, act, byz, chg] = fields[..] else {
        return Err(Error::parse(line, "expected `step i act=.. byz=.. chg=..`"));
    };
    if number::<usize>(line, index)? != exec.len() + 1 {
        return Err(Error::parse(line, format!("expected step {}", exec.len() + 1)));
    }
    let value = |field: &'_ str, key: &str| -> Result<String> {
        field
            .strip_prefix(key)
            .map(str::to_string)
            .ok_or_else(|| Error::parse(line, format!("expected `{key}...`")))
    };
    let act = value(act, "act=")?;
    let activated = if act == "-" {
        Vec::new()
    } else {
        act.split(',').map(|t| number(line, t)).collect::<Result<Vec<usize>>>()?
    };
    let byz_writes: ByzantineWrites = parse_assignments(line, &value(byz, "byz=")?)?.into_iter().collect();
    let mut config = exec.last_configuration().clone();
    for (v, s) in parse_assignments(line, &value(chg, "chg=")?)? {
        if v >= config.len() {
            return Err(Error::parse(line, format!("process {v} out of range")));
        }
        config.set(v, s);
    }
    Ok(StepRecord {
        activated,
        byz_writes,
        config,
    })
}

pub const METRICS_HEADER: [&str; 10] = [
    "scenario",
    "seed",
    "n",
    "m",
    "f",
    "first_lc_index",
    "first_lc_star_index",
    "disruption_count",
    "max_changes",
    "status",
];

/// One metrics CSV row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsRow {
    pub scenario: String,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub f: usize,
    pub first_lc_index: Option<usize>,
    pub first_lc_star_index: Option<usize>,
    pub disruption_count: usize,
    pub max_changes: usize,
    /// `ok`, `violation: ...` or `error: ...`.
    pub status: String,
}

impl MetricsRow {
    pub fn from_metrics(
        scenario: &str,
        exec: &Execution,
        metrics: &StabilizationMetrics,
        status: String,
    ) -> Self {
        let topo = exec.topology();
        MetricsRow {
            scenario: scenario.to_string(),
            seed: exec.seed,
            n: topo.process_count(),
            m: topo.edge_count(),
            f: exec.faults().fault_count(),
            first_lc_index: metrics.first_lc_index,
            first_lc_star_index: metrics.first_lc_star_index,
            disruption_count: metrics.disruption_count,
            max_changes: metrics.max_area_correct_changes(exec.faults()),
            status,
        }
    }

    pub fn error(scenario: &str, seed: u64, message: &str) -> Self {
        MetricsRow {
            scenario: scenario.to_string(),
            seed,
            n: 0,
            m: 0,
            f: 0,
            first_lc_index: None,
            first_lc_star_index: None,
            disruption_count: 0,
            max_changes: 0,
            status: format!("error: {message}"),
        }
    }

    pub fn is_error(&self) -> bool {
        self.status.starts_with("error")
    }

    fn fields(&self) -> [String; 10] {
        let opt = |o: Option<usize>| o.map_or_else(String::new, |v| v.to_string());
        [
            self.scenario.clone(),
            self.seed.to_string(),
            self.n.to_string(),
            self.m.to_string(),
            self.f.to_string(),
            opt(self.first_lc_index),
            opt(self.first_lc_star_index),
            self.disruption_count.to_string(),
            self.max_changes.to_string(),
            self.status.clone(),
        ]
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let map_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    writer.write_record(METRICS_HEADER).map_err(map_err)?;
    for row in rows {
        writer.write_record(row.fields()).map_err(map_err)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn metrics_csv_string(rows: &[MetricsRow]) -> String {
    let mut buf = Vec::new();
    write_metrics_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is UTF-8")
}

/// DOT rendering of `cfg`: one node per process carrying its role, area and
/// level, one edge `v -> prnt_v` per valid parent pointer.
pub fn to_dot(
    topo: &Topology,
    fm: &FaultModel,
    areas: &ContainmentAreas,
    cfg: &Configuration,
) -> String {
    let mut out = String::from("digraph ssbfs {\n  node [shape=circle];\n");
    for v in topo.processes() {
        let role = if v == topo.root() {
            "root"
        } else if fm.is_byzantine(v) {
            "byzantine"
        } else {
            "correct"
        };
        let area = if areas.s_b_star.contains(&v) {
            "s_b_star"
        } else if areas.e_b.contains(&v) {
            "e_b"
        } else {
            "outside"
        };
        let color = match (role, area) {
            ("root", _) => "green",
            ("byzantine", _) => "red",
            (_, "s_b_star") => "orange",
            (_, "e_b") => "yellow",
            _ => "white",
        };
        let _ = writeln!(
            out,
            "  {v} [label=\"{v}\\nL={}\", role={role}, area={area}, level={}, style=filled, fillcolor={color}];",
            cfg.level(v),
            cfg.level(v)
        );
    }
    for v in topo.processes() {
        if let Some(p) = cfg.prnt(v).filter(|&p| topo.are_adjacent(v, p)) {
            let _ = writeln!(out, "  {v} -> {p};");
        }
    }
    out.push_str("}\n");
    out
}
