//! Data ingestion, scenarios, experiment runs and their artifacts.

pub mod config;
pub mod data;
pub mod run;
pub mod scenario;

pub use config::ExperimentConfig;
pub use data::{load_idx, load_mnist_dir, Dataset};
pub use run::{
    ablation, dump_images, evaluate_run, memory_report, run_baseline, run_binplay, run_tracks, BaselineMode,
    Experiment, RunDir, RunMetrics,
};
pub use scenario::{build_scenario, default_split, Scenario, ScenarioBatch};
