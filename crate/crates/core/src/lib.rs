//! Sequential stochastic optimization over drifting problems with adaptive
//! sample-size selection.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod config;
pub mod cv;
pub mod domain;
pub mod drift;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod planner;
pub mod policy;
pub mod rng;
pub mod run;
pub mod scenarios;
pub mod sgd;

pub use error::{Error, Result};
