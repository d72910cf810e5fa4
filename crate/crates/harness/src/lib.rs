//! Command-line harness: frozen scenario suites, training runs with
//! manifests, checkpoint evaluation and reward-threshold ablations.

pub mod cli;
pub mod manifest;
pub mod run;
pub mod suite;

pub use cli::run_cli;
