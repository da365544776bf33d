//! Command-line driver for the adiabatic Wigner–Weisskopf laboratory:
//! configuration, parameter sweeps with convergence-order fits, emission
//! spectra and regime reports.

pub mod config;
pub mod error;
pub mod fit;
pub mod run;

pub use config::Scenario;
pub use error::{HarnessError, Result};
