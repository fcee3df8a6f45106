//! Deterministic interval-based simulator of a heterogeneous edge cluster.
//!
//! Every interval is split into fixed sub-ticks. CPU is shared max-min fairly
//! among resident tasks, faults are modelled as resource hogs or memory
//! leaks, and ground-truth fault labels come from sustained threshold
//! conditions. [`ClusterState`] is a plain value, so a clone is a snapshot and
//! co-simulation runs the very same engine as live execution.

mod engine;
mod schedule;
mod types;
mod window;
mod workload;

pub use engine::{
    cosimulate, qos_score, water_fill, ClusterState, CompletedTask, IntervalRecord, Resident, SimEnv, SimParams,
    Snapshot,
};
pub use schedule::{Assignment, Schedule};
pub use types::{AppClass, FaultClass, FaultEvent, FaultLabels, FaultPlan, FaultRates, HostSpec, Task};
pub use window::{feature_bounds, normalize_window, MetricsWindow, FEATURE_NAMES, NUM_FEATURES};
pub use workload::{generate_workloads, ClassProfile, WorkloadConfig};
