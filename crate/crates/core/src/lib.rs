//! Adiabatic Wigner–Weisskopf laboratory.
//!
//! A slowly driven `d`-level atom exchanges a single excitation with a bosonic
//! field. This crate provides the exact single-excitation dynamics on a
//! discretized field, the reduced (Volterra and effective-generator) atomic
//! dynamics, the non-Hermitian spectral machinery of the effective generator,
//! closed-form leading-order asymptotics, and emitted-spectrum observables.
//!
//! Conventions used throughout:
//!
//! * rescaled time `t ∈ [0, 1]`, adiabatic parameter `ε`, physical time `t/ε`;
//! * `γ(t) = ∫₀^∞ ρ(ω) e^{-iωt} dω` and `γ̂(α) = (2π)^{-1/2} ∫ e^{iαt} γ(t) dt`;
//! * inner products are conjugate-linear in the first argument;
//! * atomic amplitudes `z` are coordinates in the basis in which `A(t)` is
//!   given (the `φ_j(0)` basis whenever `A(0)` is diagonal).

pub mod asymptotics;
pub mod atom;
pub mod bath;
pub mod emission;
pub mod error;
pub mod hilbert;
pub mod interp;
pub mod linalg;
pub mod ode;
pub mod quadrature;
pub mod reduced;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
