//! Simulation and inference for the index parameter of Bessel-type
//! diffusions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod eigen;
pub mod error;
pub mod estimate;
pub mod model;
pub mod montecarlo;
pub mod process;
pub mod special;

pub use error::{Error, Result};
