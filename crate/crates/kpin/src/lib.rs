//! Experiment harness for learned-gain Kalman channel prediction: scenario
//! configs, Monte Carlo runs, ablation sweeps, and file formats.

#![deny(missing_docs)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod config;
mod error;
pub mod harness;
pub mod io;

pub use error::{Error, Result};
pub use kpin_core as core;
