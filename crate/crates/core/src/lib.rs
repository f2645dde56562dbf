//! Numerical lab for Type-I blowup of a parabolic system with power or
//! exponential coupling.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fd;
pub mod field;
pub mod io;
pub mod ode;
pub mod params;
pub mod pde;
pub mod quadrature;
pub mod reduced;
pub mod shoot;
pub mod sim_frame;
pub mod spectral;
pub mod verifier;

pub use error::{Error, Result};
pub use params::{compute_constants, BlowupConstants, Nonlinearity, Parameters};
