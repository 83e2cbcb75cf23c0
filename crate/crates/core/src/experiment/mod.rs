//! Experiment harness.
//!
//! A run is driven by an [`ExperimentConfig`]: load data, split, train the
//! original, retrain the gold model, unlearn, run the relabel baseline and
//! score everything into a [`MetricsReport`](crate::metrics::MetricsReport).

pub mod config;
pub mod fixtures;
pub mod plots;
pub mod run;
pub mod stages;
pub mod sweep;
pub mod timing;

pub use config::{
    DatasetSource, ExperimentConfig, GridPoint, MetricToggles, SeedPlan, SweepGrid, SweepSpec, OUTPUT_ENV,
};
pub use plots::{emit_plots, PlotOutput};
pub use run::{
    evaluate, prepare, run_experiment, run_pipeline, run_sequential, ExperimentOutcome, ModelSet, PipelineRun,
    Prepared, RunManifest, RunRecord, SequentialRow, Timings, Trained,
};
pub use sweep::{run_sweep, run_sweep_to_dir, SweepRow};
pub use timing::{timing_compare, TimedMethod, TimingRow};
