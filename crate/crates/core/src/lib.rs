//! Deep residual networks viewed as discretised dynamical systems: weight
//! processes, forward and backward recursions, their continuous-depth limits,
//! and estimators for the scaling exponents of trained weights.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backprop;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod forward;
pub mod limits;
pub mod linalg;
pub mod processes;
pub mod rng;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
pub use linalg::{Mat, Tensor4, Vector};
