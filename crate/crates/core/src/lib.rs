//! Age of Information (AoI) for a two-way data exchange between a mains-powered
//! access point and an energy-harvesting device.
//!
//! The access point splits its transmit power: a fraction `1 - rho` carries
//! downlink data, the remaining `rho` is wireless power transfer that the
//! device banks and spends on uplink transmissions. The crate provides
//!
//! * [`model`]: system parameters and per-block physical primitives,
//! * [`analytic`]: service-time distributions, moments and closed-form AoI,
//! * [`optimizer`]: the weighted-sum-AoI minimizing split ratio,
//! * [`simulator`]: a block-level Monte Carlo engine used as the oracle for
//!   the closed forms, plus the time-splitting baseline,
//! * [`cli`]: the command-line driver and its CSV output format.

pub mod analytic;
pub mod cli;
mod error;
pub mod model;
pub mod optimizer;
pub mod simulator;

pub use error::{Error, Result};
