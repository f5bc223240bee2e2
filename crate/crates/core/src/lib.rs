//! Physics-informed neural-network surrogates for the 1D acoustic wave
//! equation with frequency-independent and frequency-dependent impedance walls,
//! plus the reference solvers, material fitting and error metrics used to
//! validate them.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod config;
pub mod error;
pub mod losses;
pub mod material;
pub mod metrics;
pub mod model;
pub mod net;
pub mod reference;
pub mod sampling;
pub mod trainer;

pub use error::{Error, Result};
