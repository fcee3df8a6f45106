//! Experiment plumbing: configuration, the baseline scheduler, data
//! collection, the closed-loop runner and persistence.

mod checkpoint;
mod config;
mod gradsuite;
mod run;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ParamEntry, FORMAT_VERSION};
pub use config::{ExperimentConfig, Phase};
pub use gradsuite::{gradient_suite, SuiteEntry};
pub use run::{
    baseline_schedule, build_env, collect_fpe_dataset, evaluate_trace, from_jsonl, gan_stream, run_closed_loop, LiveCluster, to_jsonl,
    Driver, Models, Pending, RunOutput, Timing, TraceRecord, WindowTracker,
};
