//! Numerical laboratory for the reducibility of quasi-periodically forced
//! one-dimensional quantum (an)harmonic oscillators.
//!
//! The pipeline follows a chain of unitary changes of variables acting on a
//! Galerkin truncation of `H(ωt) = (-i∂ₓ - εW₁)² + V(x) + εW₀`:
//!
//! 1. [`spectral_basis`] discretizes `H₀ = -∂ₓₓ + V` and extracts its
//!    eigenbasis, Sobolev weights and classical-orbit oracles.
//! 2. [`symbols`] validates and quantizes the forcing symbols `W₀`, `W₁`.
//! 3. [`conjugation`] implements the quasi-periodic transformation law and the
//!    gauge transformation removing the magnetic term.
//! 4. [`diophantine`] certifies frequencies and scans second Melnikov divisors.
//! 5. [`kam`] runs the quadratically convergent reducibility iteration.
//! 6. [`floquet`] integrates the original system directly and cross-checks the
//!    reduced dynamics.

// Negated comparisons double as NaN rejection; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conjugation;
pub mod diophantine;
pub mod error;
pub mod floquet;
pub mod grid;
pub mod kam;
pub mod linalg;
pub mod phase;
pub mod quadrature;
pub mod qp;
pub mod spectral_basis;
pub mod stats;
pub mod symbols;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
