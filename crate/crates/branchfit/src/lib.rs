//! File formats, parallel drivers and the command line for `branchfit-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gridfile;
pub mod parallel;
pub mod report;
pub mod selftest;

pub use branchfit_core as core;
pub use error::{AppError, ExitCode};
