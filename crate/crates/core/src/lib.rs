//! Simulation of NV-ensemble ac magnetometry with dynamical decoupling, and
//! reconstruction of field maps from sparse samples by kriging with
//! reference-point calibration.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod kriging;
pub mod magnetometry;
pub mod metrics;
pub mod noise;
pub mod optim;
pub mod pulse;
pub mod sensing;
pub mod spin;

pub use error::{Error, Result};
