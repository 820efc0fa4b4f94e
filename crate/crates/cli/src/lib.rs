//! Experiment harness around the `twotail` crate: run configurations,
//! trace persistence, proposition checking, and plot emission. The `twotail`
//! binary is a thin command-line frontend over this library.

pub mod config;
pub mod plot;
pub mod propositions;
pub mod runner;
pub mod trace;

pub use config::{AlgorithmChoice, LossSource, RunConfig};
pub use propositions::{check_propositions, PropositionReport};
pub use runner::{run_and_persist, run_experiment, ExperimentOutput};
pub use trace::{RunTrace, TraceRecord};
