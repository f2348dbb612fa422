//! Numerical laboratory for two-sided chordal SLE derivative exponents.
//!
//! The crate is organised around five pieces:
//!
//! * [`exponents`]: closed forms for the half-plane and full-plane
//!   intersection exponents, the two-sided derivative exponent
//!   `lambda_kappa(w1, w2)` and its eigenfunction `G`.
//! * [`loewner`]: a chordal Loewner chain driven by `sqrt(kappa) B_t`,
//!   tracking the images of `0` and `1` and their derivatives.
//! * [`diffusion`]: direct simulation of the boundary diffusion `Y_s` with
//!   Feynman-Kac weights, plus a Crank-Nicolson solver for the backward
//!   equation it satisfies.
//! * [`walkers`]: lattice random-walk estimates of half-plane
//!   non-intersection exponents via fixed-population splitting.
//! * [`stats`], [`records`] and [`report`]: estimates, fits, the CSV/JSON
//!   result schema and the consolidated report.
//!
//! All Monte Carlo is driven by counter-based streams ([`rng`]), so results
//! are bit-for-bit reproducible and independent of the worker count.

pub mod diffusion;
pub mod error;
pub mod exponents;
pub mod loewner;
pub mod mc;
pub mod records;
pub mod report;
pub mod rng;
pub mod stats;
pub mod walkers;

pub use error::{Error, Result};
