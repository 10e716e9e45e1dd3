#![no_std]
// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod delay;
pub mod error;
pub mod estimator;
pub mod glm;
pub mod math;
pub mod nuisance;
pub mod sensitivity;
pub mod shrinkage;
pub mod sim;

pub use error::{Error, Result};
