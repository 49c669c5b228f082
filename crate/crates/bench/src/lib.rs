//! Experiment harness for the beamforming solvers in `mlgd-core`.
//!
//! A plan sweeps SNR x channel realization x algorithm x restart, keeps the best
//! restart per realization and writes per-run and aggregate CSV files.

pub mod aggregate;
pub mod complexity;
pub mod experiment;
pub mod gradcheck;
pub mod output;
pub mod plan;

pub use aggregate::{summarize, Aggregate};
pub use complexity::{report_complexity, ComplexityRow};
pub use experiment::{run_experiment, run_experiment_sequential, ExperimentResult, RunRecord, RunSummary};
#[cfg(feature = "parallel")]
pub use experiment::run_experiment_parallel;
pub use plan::ExperimentPlan;
