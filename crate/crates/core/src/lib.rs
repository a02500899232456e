// NaN must fail every range check, so `!(x > 0.0)` is used on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod area;
pub mod cellsystem;
pub mod checks;
pub mod config;
pub mod cumulant;
pub mod dimension;
pub mod error;
pub mod lamperti;
pub mod levy;
pub mod numeric;
pub mod seed;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
