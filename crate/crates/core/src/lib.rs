//! Split Bregman and two-split ADMM for regularized least-squares image
//! restoration, `min_x 0.5||y - A x||^2 + phi(C x)`, together with the
//! circulant convergence-rate analysis of the quadratic case and
//! augmented-Lagrangian parameter selection.
//!
//! Module map:
//!
//! * [`operators`]: blur `A`, finite differences `C`, their Gram spectra.
//! * [`prox`]: potentials `phi` and proximal maps.
//! * [`inner`]: exact circulant and PCG solvers for the x-update.
//! * [`algorithms`]: the outer iterations and [`algorithms::run`].
//! * [`spectral`]: per-frequency rates, optimal `eta`/`rho`.
//! * [`oracle`]: dense transition matrices for checking [`spectral`].
//! * [`experiments`]: problem generation, references, the sweep protocol.

pub mod algorithms;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod grid;
pub mod inner;
pub mod io;
pub mod operators;
pub mod oracle;
pub mod par;
pub mod prox;
pub mod spectral;
pub mod trace;

pub use error::{Error, Result};
pub use grid::{Direction, GradientField, ImageGrid};
