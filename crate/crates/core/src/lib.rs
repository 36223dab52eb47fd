//! Numerical core for the two-phase nonlocal free boundary functional
//!
//! ```text
//! F(u, E) = ∬_{R^{2n} \ (Ω^c)^2} |u(x) - u(y)|^2 / |x - y|^{n+2s} dx dy + Per_σ(E, Ω)
//! ```
//!
//! on uniform grids in one and two dimensions.
//!
//! The crate is `no_std` (it needs `alloc`). The `std` feature adds
//! `std::error::Error` impls; `parallel` spreads table assembly and the
//! half-space convolutions over a rayon pool. Results never depend on the
//! number of worker threads.
//!
//! Module map:
//! - [`model`]: grids, exterior data, discrete functions, phase sets, admissible pairs
//! - [`quadrature`]: singular cell-pair weights and exterior tails
//! - [`energy`]: interaction, fractional perimeter, Gagliardo energy, total energy
//! - [`operators`]: discrete fractional Laplacian and s-harmonicity residuals
//! - [`extension`]: Poisson extensions, weighted Dirichlet energies, Weiss profile, cone defect
//! - [`solver`]: constrained quadratic solve, phase updates, alternating descent, brute-force oracle

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod energy;
pub mod error;
pub mod extension;
pub mod math;
pub mod model;
pub mod operators;
mod par;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
