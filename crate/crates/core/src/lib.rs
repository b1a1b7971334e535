//! Simulation and stability analysis of a ladder atom in a cavity whose
//! output waveguide feeds back into the cavity after a round-trip delay.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod dde;
pub mod error;
pub mod fullsim;
pub mod model;
pub mod parallel;
pub mod spectral;
pub mod stability;

pub use error::{Error, Result};
