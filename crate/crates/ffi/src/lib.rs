//! C ABI over the `ssbfs` simulator.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `_free` function. Every fallible call returns an
//! [`SsbfsStatus`]; on failure the message is kept per thread and can be
//! copied out with [`ssbfs_last_error`]. Panics are caught at the boundary and
//! reported as [`SsbfsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssbfs::adversary::{Adversary, AdversaryKind};
use ssbfs::{
    analysis, format, scenarios, Configuration, ContainmentAreas, DaemonKind, DaemonPolicy, Error,
    Execution, Fairness, FaultModel, ProcessState, StopCriterion, Topology,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsbfsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Parse = 4,
    Contract = 5,
    Generation = 6,
    Fairness = 7,
    Analysis = 8,
    Scenario = 9,
    Io = 10,
    OutOfRange = 11,
    ReplayMismatch = 12,
    Panic = 13,
}

/// Where a process sits relative to the Byzantine processes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsbfsArea {
    Root = 0,
    Byzantine = 1,
    /// Strictly closer to a Byzantine process than to the root (`S_B*`).
    Strict = 2,
    /// Equally close (`E_B`).
    Frontier = 3,
    /// Strictly closer to the root.
    Outside = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsbfsDaemon {
    Central = 0,
    Distributed = 1,
    Synchronous = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsbfsAdversary {
    Silent = 0,
    FakeRoot = 1,
    MirrorRoot = 2,
    Oscillator = 3,
    Random = 4,
    Honest = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsbfsInit {
    /// Every process at `(⊥, 0)`.
    Zero = 0,
    Corrupted = 1,
    /// Seeded from `SsbfsRunOptions::seed`.
    Random = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SsbfsRunOptions {
    pub daemon: SsbfsDaemon,
    /// Random activation order when true, round robin otherwise.
    pub random_fairness: bool,
    pub adversary: SsbfsAdversary,
    pub init: SsbfsInit,
    pub seed: u64,
    /// Step budget; 0 selects the default of `50·n·m`.
    pub max_steps: u64,
}

/// Summary of an execution. Absent indices are reported as -1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SsbfsMetrics {
    pub first_lc_index: i64,
    pub first_lc_star_index: i64,
    pub disruption_count: u64,
    pub max_changes: u64,
}

/// A topology together with its Byzantine processes.
pub struct SsbfsTopology {
    topology: Arc<Topology>,
    faults: FaultModel,
    areas: ContainmentAreas,
}

pub struct SsbfsExecution {
    execution: Execution,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(SsbfsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidInput(_) => SsbfsStatus::InvalidInput,
            Error::Parse { .. } => SsbfsStatus::Parse,
            Error::Contract(_) => SsbfsStatus::Contract,
            Error::Generation(_) => SsbfsStatus::Generation,
            Error::Fairness { .. } => SsbfsStatus::Fairness,
            Error::Analysis { .. } => SsbfsStatus::Analysis,
            Error::Scenario { .. } => SsbfsStatus::Scenario,
            Error::Io(_) => SsbfsStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: SsbfsStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

/// Runs `f`, records any error or panic, and converts the outcome to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsbfsStatus {
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (SsbfsStatus::Ok, String::new()),
        Ok(Err(Failure(status, message))) => (status, message),
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            (SsbfsStatus::Panic, message)
        }
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
    status
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, Failure> {
    if s.is_null() {
        return fail(SsbfsStatus::NullPointer, "null string");
    }
    CStr::from_ptr(s)
        .to_str()
        .or_else(|_| fail(SsbfsStatus::InvalidUtf8, "string is not UTF-8"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure(SsbfsStatus::NullPointer, "null handle".into()))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure(SsbfsStatus::NullPointer, "null output pointer".into()))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let message = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = message.len().min(len - 1);
            ptr::copy_nonoverlapping(message.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        message.len()
    })
}

/// Parses a topology in the text format of the CLI (`n root`, one edge per
/// line, optional `byz` line).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out_topology` writable.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_topology_parse(
    text: *const c_char,
    out_topology: *mut *mut SsbfsTopology,
) -> SsbfsStatus {
    guard(|| {
        let slot = out(out_topology)?;
        let (topology, byz) = format::parse_topology(c_str(text)?)?;
        let faults = FaultModel::new(&topology, byz.unwrap_or_default())?;
        let areas = ssbfs::compute_containment_areas(&topology, &faults)?;
        *slot = Box::into_raw(Box::new(SsbfsTopology {
            topology: Arc::new(topology),
            faults,
            areas,
        }));
        Ok(())
    })
}

/// # Safety
/// `topology` must be null or a handle from [`ssbfs_topology_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_topology_free(topology: *mut SsbfsTopology) {
    if !topology.is_null() {
        drop(Box::from_raw(topology));
    }
}

/// Number of processes, 0 for a null handle.
///
/// # Safety
/// `topology` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_topology_process_count(topology: *const SsbfsTopology) -> usize {
    topology.as_ref().map_or(0, |t| t.topology.process_count())
}

/// Number of edges, 0 for a null handle.
///
/// # Safety
/// `topology` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_topology_edge_count(topology: *const SsbfsTopology) -> usize {
    topology.as_ref().map_or(0, |t| t.topology.edge_count())
}

/// Diameter, 0 for a null handle.
///
/// # Safety
/// `topology` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_topology_diameter(topology: *const SsbfsTopology) -> u32 {
    topology.as_ref().map_or(0, |t| t.topology.diameter())
}

/// # Safety
/// `topology` must be a live handle and `out_area` writable.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_topology_area(
    topology: *const SsbfsTopology,
    process: usize,
    out_area: *mut SsbfsArea,
) -> SsbfsStatus {
    guard(|| {
        let t = handle(topology)?;
        let slot = out(out_area)?;
        if !t.topology.contains(process) {
            return fail(SsbfsStatus::OutOfRange, format!("no process {process}"));
        }
        *slot = if process == t.topology.root() {
            SsbfsArea::Root
        } else if t.faults.is_byzantine(process) {
            SsbfsArea::Byzantine
        } else if t.areas.s_b_star.contains(&process) {
            SsbfsArea::Strict
        } else if t.areas.e_b.contains(&process) {
            SsbfsArea::Frontier
        } else {
            SsbfsArea::Outside
        };
        Ok(())
    })
}

/// Options matching the CLI defaults: distributed daemon, random fairness,
/// oscillating adversary, random initial configuration, seed 0.
#[no_mangle]
pub extern "C" fn ssbfs_run_options_default() -> SsbfsRunOptions {
    SsbfsRunOptions {
        daemon: SsbfsDaemon::Distributed,
        random_fairness: true,
        adversary: SsbfsAdversary::Oscillator,
        init: SsbfsInit::Random,
        seed: 0,
        max_steps: 0,
    }
}

fn build_run(t: &SsbfsTopology, o: &SsbfsRunOptions) -> Result<Execution, Failure> {
    let kind = match o.daemon {
        SsbfsDaemon::Central => DaemonKind::Central,
        SsbfsDaemon::Distributed => DaemonKind::Distributed,
        SsbfsDaemon::Synchronous => DaemonKind::Synchronous,
    };
    let fairness = if o.random_fairness {
        Fairness::Random { seed: o.seed }
    } else {
        Fairness::RoundRobin
    };
    let adversary = match o.adversary {
        SsbfsAdversary::Silent => AdversaryKind::Silent,
        SsbfsAdversary::FakeRoot => AdversaryKind::FakeRoot,
        SsbfsAdversary::MirrorRoot => AdversaryKind::MirrorRoot,
        SsbfsAdversary::Oscillator => AdversaryKind::oscillator(),
        SsbfsAdversary::Random => AdversaryKind::Random { seed: o.seed },
        SsbfsAdversary::Honest => AdversaryKind::Honest,
    };
    let topo = &t.topology;
    let mut init = match o.init {
        SsbfsInit::Zero => Configuration::uniform(topo.process_count(), ProcessState::ROOT),
        SsbfsInit::Corrupted => scenarios::corrupted_configuration(topo),
        SsbfsInit::Random => scenarios::random_configuration(topo, &mut ChaCha8Rng::seed_from_u64(o.seed)),
    };
    init.normalize(topo, &t.faults);
    let max_steps = match o.max_steps {
        0 => ssbfs::scheduler::default_budget(topo),
        n => usize::try_from(n).or_else(|_| fail(SsbfsStatus::InvalidInput, "max_steps too large"))?,
    };
    Ok(ssbfs::run(
        topo.clone(),
        t.faults.clone(),
        init,
        DaemonPolicy { kind, fairness },
        &mut Adversary::new(adversary),
        StopCriterion::MaxSteps(max_steps),
        o.seed,
    )?)
}

/// Runs the protocol on `topology`. A null `options` selects
/// [`ssbfs_run_options_default`].
///
/// # Safety
/// `topology` must be a live handle, `options` null or readable, and
/// `out_execution` writable.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_run(
    topology: *const SsbfsTopology,
    options: *const SsbfsRunOptions,
    out_execution: *mut *mut SsbfsExecution,
) -> SsbfsStatus {
    guard(|| {
        let t = handle(topology)?;
        let slot = out(out_execution)?;
        let options = options.as_ref().copied().unwrap_or_else(|| ssbfs_run_options_default());
        let execution = build_run(t, &options)?;
        *slot = Box::into_raw(Box::new(SsbfsExecution { execution }));
        Ok(())
    })
}

/// Loads a trace recorded on `topology`.
///
/// # Safety
/// `topology` must be a live handle, `trace` NUL-terminated and
/// `out_execution` writable.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_trace_read(
    topology: *const SsbfsTopology,
    trace: *const c_char,
    out_execution: *mut *mut SsbfsExecution,
) -> SsbfsStatus {
    guard(|| {
        let t = handle(topology)?;
        let slot = out(out_execution)?;
        let execution = format::read_trace(c_str(trace)?, t.topology.clone())?;
        *slot = Box::into_raw(Box::new(SsbfsExecution { execution }));
        Ok(())
    })
}

/// # Safety
/// `execution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_execution_free(execution: *mut SsbfsExecution) {
    if !execution.is_null() {
        drop(Box::from_raw(execution));
    }
}

/// Number of steps; the execution holds one more configuration than steps.
///
/// # Safety
/// `execution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_execution_len(execution: *const SsbfsExecution) -> usize {
    execution.as_ref().map_or(0, |e| e.execution.len())
}

/// Level of `process` in configuration `index`.
///
/// # Safety
/// `execution` must be a live handle and `out_level` writable.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_execution_level(
    execution: *const SsbfsExecution,
    index: usize,
    process: usize,
    out_level: *mut u64,
) -> SsbfsStatus {
    guard(|| {
        let e = &handle(execution)?.execution;
        let slot = out(out_level)?;
        if index > e.len() || !e.topology().contains(process) {
            return fail(
                SsbfsStatus::OutOfRange,
                format!("configuration {index}, process {process} out of range"),
            );
        }
        *slot = e.configuration(index).level(process);
        Ok(())
    })
}

/// # Safety
/// `execution` must be a live handle and `out_metrics` writable.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_execution_metrics(
    execution: *const SsbfsExecution,
    out_metrics: *mut SsbfsMetrics,
) -> SsbfsStatus {
    guard(|| {
        let e = &handle(execution)?.execution;
        let slot = out(out_metrics)?;
        let m = analysis::measure(e)?;
        let index = |i: Option<usize>| i.map_or(-1, |i| i as i64);
        *slot = SsbfsMetrics {
            first_lc_index: index(m.first_lc_index),
            first_lc_star_index: index(m.first_lc_star_index),
            disruption_count: m.disruption_count as u64,
            max_changes: m.max_area_correct_changes(e.faults()) as u64,
        };
        Ok(())
    })
}

/// Writes the execution as a trace file at `path`.
///
/// # Safety
/// `execution` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_execution_write_trace(
    execution: *const SsbfsExecution,
    path: *const c_char,
) -> SsbfsStatus {
    guard(|| {
        let e = &handle(execution)?.execution;
        let path = Path::new(c_str(path)?);
        let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(Error::from)?);
        format::write_trace(e, &mut file)?;
        std::io::Write::flush(&mut file).map_err(Error::from)?;
        Ok(())
    })
}

/// Re-derives every step with the protocol. Returns
/// [`SsbfsStatus::ReplayMismatch`] at the first step that disagrees.
///
/// # Safety
/// `execution` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssbfs_execution_replay(execution: *const SsbfsExecution) -> SsbfsStatus {
    guard(|| {
        let e = &handle(execution)?.execution;
        e.replay()
            .or_else(|d| fail(SsbfsStatus::ReplayMismatch, d.to_string()))
    })
}
