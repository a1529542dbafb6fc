//! Numerics for a reaction-diffusion-ODE model of early carcinogenesis.
//!
//! The model couples a non-diffusing, autocatalytic cell density `u` with a
//! diffusing growth factor `w` on the unit interval with zero-flux boundaries:
//!
//! ```text
//! u_t = (a1 u w / (1 + u w) - d1) u
//! w_t = D_w w_xx - w - u^2 w + kappa1
//! ```
//!
//! The crate is `no_std` (it needs `alloc`). It contains the local kinetics,
//! the linear stability / diffusion-driven-instability analysis, a
//! piecewise-linear finite-element method of lines, nonconstant steady states
//! by shooting, run diagnostics (mass, spikes, growth orders) and mesh
//! convergence studies. File formats, configuration and the CLI live in the
//! `spikepattern` crate.

#![no_std]
#![deny(missing_docs)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod convergence;
pub mod diagnostics;
pub mod grid;
pub mod integrator;
pub mod kinetics;
pub mod stability;
pub mod steady_bvp;
mod tridiag;

pub use num_complex::Complex64;
pub use tridiag::{Tridiagonal, TridiagonalError};
