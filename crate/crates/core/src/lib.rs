//! Human-to-robot whole-body motion transfer.

// `!(x > 0.0)` style checks are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geom;
pub mod model;
pub mod retarget;
pub mod wbc;
pub mod admittance;
pub mod base;
pub mod stream;
pub mod sim;
pub mod config;
pub mod serve;
pub mod cli;
