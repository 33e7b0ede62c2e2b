// NaN-rejecting `!(x > 0.0)` checks, tabulated quadrature constants and
// index loops over parallel arrays are deliberate in the numerical code.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

pub mod calibration;
pub mod cokriging;
pub mod commands;
pub mod config;
pub mod criteria;
pub mod error;
pub mod excursion;
pub mod gaussian;
pub mod grf;
pub mod planner;
pub mod simulator;

pub use error::{Error, Result};
