//! Bellman-Harris branching processes with Gamma-distributed lifetimes and
//! binary splitting.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece of
//! the toolkit:
//!
//! * [`spectral`]: the lifetime law, its Laplace transform, the roots of
//!   `Lg(ρ) = 1/2`, regime classification and the closed-form mean.
//! * [`sampling`] and [`sim`]: Gamma variates, residual lifetimes and an
//!   event-driven population simulator recording counts on a time grid.
//! * [`sigma`]: the limiting variance of the normalized one-step residual in
//!   the Gaussian regime, and the interpolated table built from it.
//! * [`inference`]: the estimation pipeline from population counts to
//!   `(k, θ)`.
//!
//! File formats, parallel drivers and the command line live in the
//! `branchfit` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod inference;
pub mod quad;
pub mod regression;
pub mod rng;
pub mod sampling;
pub mod sigma;
pub mod sim;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use spectral::{GammaLifetime, Regime, SpectralData};
