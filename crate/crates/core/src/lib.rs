//! Numerical toolkit for the scaled non-cutoff Boltzmann operator, the Landau
//! operator and the grazing limit between them.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod boltzmann;
pub mod error;
pub mod field;
pub mod geometry;
pub mod grazing;
pub mod harmonic;
pub mod identities;
pub mod kernel;
pub mod landau;
pub mod linearized;
pub mod quadrature;
pub mod relaxation;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{Mat3, Vec3};
pub use kernel::{KernelParams, SmoothCutoff};
