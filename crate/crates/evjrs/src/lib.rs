//! Std companion of `evjrs-core`: file formats, the timed labeling /
//! training / pruned-solve pipeline, and the `evjrs` command line.

pub mod cli;
pub mod clock;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use error::{Error, Result};
pub use evjrs_core as core;
