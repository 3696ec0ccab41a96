//! Experiment harness: dataset generation, penalty-gap evaluation, MAPE
//! tables, runtime breakdowns and deadline calibration, all writing
//! CSV files stamped with the hash of the configuration that produced them.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod maps;
pub mod planfile;
pub mod report;

pub use config::ExperimentConfig;
pub use error::BenchError;
