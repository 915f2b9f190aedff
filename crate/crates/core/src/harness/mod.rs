//! Experiment plumbing: configuration, presets, the two runners, sweeps and
//! report files.

mod analytic;
pub mod config;
mod link;
mod montecarlo;
pub mod presets;
pub mod report;
mod run;

pub use config::{ExperimentConfig, Mode, OutputFormat, Protocol, MIN_MONTECARLO_FRAMES};
pub use montecarlo::BATCH_FRAMES;
pub use presets::{calibrate, preset, table1_target, CalibrationReport, Table1Target, PRESET_NAMES};
pub use report::{emit_report, read_jsonlines, write_csv, write_jsonlines, ClassReport, RunReport, CSV_COLUMNS};
pub use run::{
    run_experiment, run_experiment_with, run_with_events, sweep_distance, sweep_distance_with,
    worker_count, SweepPoint,
};
