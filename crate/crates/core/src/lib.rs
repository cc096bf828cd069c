//! Channel prediction with a hybrid filter-then-predict workflow.
//!
//! The crate identifies an autoregressive channel model from noisy pilot
//! observations, wraps it in a linear-Gaussian state-space model, and predicts
//! future channels either with a conventional Kalman filter or with a
//! recurrent network that produces the gain matrix and is trained on the
//! received signals alone.
//!
//! Everything here is `no_std` (with `alloc`); file formats, configuration and
//! the command line live in the companion `kpin` crate.
#![no_std]
#![deny(missing_docs)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod ar_ssm;
pub mod channel;
mod error;
pub mod ftp;
pub mod metrics;
pub mod net;
pub mod numerics;
pub mod rng;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{ComplexMatrix, ComplexVector};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
