//! Experiment orchestration, ensembles and persistence.

pub mod config;
pub mod ensemble;
pub mod output;
pub mod run;
pub mod seed;

pub use config::{ExperimentConfig, NoiseConfig, Scenario, ScenarioKind};
pub use ensemble::{monte_carlo, Ensemble, EnsembleSummary, RunOutcome};
pub use output::{write_json, write_timeseries_csv, CSV_HEADER};
pub use run::{run_experiment, run_experiment_with, RunRecord, RunSummary, Sample};
pub use seed::derive_seed;
