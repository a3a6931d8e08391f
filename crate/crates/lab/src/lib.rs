//! Std companion to `transferlab-core`: file formats, run configuration,
//! metrics output and the `transferlab` command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod frames;
pub mod metrics;
mod wire;

pub use transferlab_core as core;
