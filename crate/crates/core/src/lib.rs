//! Jump-drift-diffusion intent inference for teleoperation trajectories.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod config;
pub mod ecod;
pub mod error;
pub mod eval;
pub mod goal;
pub mod km;
pub mod mixture;
pub mod optim;
pub mod plotdata;
pub mod reach;
pub mod sindy;
pub mod sim;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
