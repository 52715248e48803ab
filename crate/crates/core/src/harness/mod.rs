//! Configuration, training and evaluation orchestration, metrics and
//! checkpoints.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod metrics;
pub mod report;
pub mod train;

pub use config::RunConfig;
