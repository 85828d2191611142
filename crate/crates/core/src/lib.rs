//! Spectra, degeneracies and flux forces for Aharonov-Bohm billiards threaded
//! by a half-quantum flux line (a semifluxon).
//!
//! The wavefunction is handled in its real, sign-changing gauge: around the
//! flux it is expanded in `J_{n+1/2}(k rho) cos/sin((n+1/2) mu)`, and levels are
//! the wavenumbers at which that expansion can vanish on the boundary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod nodal_force;
pub mod boundary;
pub mod circle;
pub mod cli;
pub mod degeneracy;
pub mod roots;
pub mod specfun;
pub mod spectral;
pub mod weyl;

pub use error::{Error, Result};
