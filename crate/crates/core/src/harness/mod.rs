//! Configuration, experiment orchestration and result persistence.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{BetaSpec, EtaConfig, ExperimentConfig, GSpec, LawConfig, RhoConfig};
pub use experiments::{
    run_corollary_experiment, run_theorem_experiment, ConvergenceReport, CorollaryReport, EtaProvenance,
};
pub use output::{execute, rerun, Invocation, Manifest};
