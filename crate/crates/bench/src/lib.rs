//! Active-SLAM scenarios and benchmark experiments for the augmented-MI
//! estimators in [`augmi`].

pub mod cli;
pub mod csvio;
pub mod error;
pub mod experiment;
pub mod generator;

pub use csvio::emit_csv;
pub use error::{BenchError, Result};
pub use experiment::{run_actions_experiment, run_dimension_sweep, ExperimentConfig, ResultRow};
pub use generator::{generate_scenario, ScenarioParams, SlamScenario};
