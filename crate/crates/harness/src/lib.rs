//! Configuration, check suites and command implementations behind the
//! `lowrank` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod suites;

pub use error::{HarnessError, Result};
