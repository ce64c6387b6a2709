//! File formats, configuration, commands and experiment sweeps for the
//! `plrdiff` binary.

pub mod args;
pub mod array_file;
pub mod commands;
pub mod config;
pub mod error;
pub mod pgm;
pub mod run;
pub mod sweeps;
pub mod weights;

pub use error::{CliError, Result};
