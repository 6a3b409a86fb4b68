//! Configuration, replication orchestration, aggregation, CSV output,
//! benchmarking and the CLI.

pub mod aggregate;
pub mod bench;
pub mod cli;
pub mod config;
pub mod ensemble;
pub mod output;
pub mod protocols;

pub use aggregate::{aggregate, quantile, AggregateRow, Summary};
pub use bench::{bench, BenchOptions, BenchReport, BenchRow};
pub use config::SimConfig;
pub use ensemble::{run_configured, run_ensemble, EnsembleResult, RunFailure};
pub use protocols::{
    compare_methods, conserve, flocking, sign_test_p_value, simulate, sweep, CompareReport,
    ConservationRow, FlockingReport, SweepAxis, SweepReport, SweepSpec,
};
