//! Simulation and analysis of the min+1 self-stabilizing BFS spanning tree
//! protocol in networks with Byzantine processes.
//!
//! The crate is organised in layers:
//!
//! * [`graph`]: topologies, fault placement and containment areas;
//! * [`protocol`]: process state and the two guarded rules;
//! * [`scheduler`]: daemons, fairness and recorded executions;
//! * [`adversary`]: Byzantine write strategies;
//! * [`analysis`]: legitimacy, stability, disruptions and bound checks;
//! * [`scenarios`]: topology generators and the impossibility replays;
//! * [`format`]: file formats (topologies, traces, metrics, DOT);
//! * [`cli`]: the command implementations behind the `ssbfs` binary.

pub mod adversary;
pub mod analysis;
pub mod cli;
pub mod error;
pub mod format;
pub mod graph;
pub mod protocol;
pub mod scenarios;
pub mod scheduler;

pub use error::{Error, Result};
pub use graph::{
    compute_containment_areas, ContainmentAreas, FaultModel, ProcessId, ProcessSet, Topology,
};
pub use protocol::{Configuration, Level, ProcessState};
pub use scheduler::{run, DaemonKind, DaemonPolicy, Execution, Fairness, StopCriterion};
