//! Experiment configuration, dataset directories, multi-seed runs, sweeps
//! and report files.

mod config;
mod ingest;
mod report;
mod runner;

pub use config::{build_config, load_config, ExperimentConfig, ImbalanceConfig, SbmConfig};
pub use ingest::{ingest_dataset, write_dataset, EDGES_FILE, FEATURES_FILE, LABELS_FILE};
pub use report::{
    emit_report, emit_sweep, percent, HomophilyStats, MeanStd, RunReport, SeedRun, Summary, SweepPoint,
    SweepReport, METRICS_FILE, RESULTS_FILE, SWEEP_FILE,
};
pub use runner::{load_graph, run_experiment, run_on_graph, run_sweep, Sweep};
