//! Batch jobs over a dataset manifest.
//!
//! Work is spread over a pool of `workers` threads. Every job collects its
//! per-frame results in manifest order and reduces them with integer
//! counters, so outputs do not depend on the worker count.

mod config;
mod jobs;
mod pairs;

pub use config::{default_workers, JobConfig, DEFAULT_NUM_CLASSES, DEFAULT_SEED};
pub use jobs::{
    eval_part, frame_distance_sweep, run_consis_job, run_eval_job, run_refine_job, sweep_csv, write_report,
    ConsisMetric, ConsisReport, EvalPart, EvalReport, FrameFailure, RefineReport, SweepRow, FAILURE_BUDGET,
    SWEEP_CSV_HEADER,
};
pub use pairs::{
    compose_flows, enumerate_pairs, enumerate_pairs_from, FlowKind, FlowSource, FramePair, PairSet, Skip,
    SkipReason,
};
