//! Experiment runner and command-line front end for the fusion library.

pub mod config;
pub mod fuse;
pub mod gen;
pub mod runner;
pub mod svg;

pub use config::{ConfigError, ExperimentConfig};
