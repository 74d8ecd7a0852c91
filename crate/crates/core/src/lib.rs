//! Numerical workbench for the Markovian lift of controlled stochastic delay
//! equations with distributed delays in state and control.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod error;
pub mod hamiltonian;
pub mod lift;
pub mod model;
pub mod operators;
pub mod rng;
pub mod scenarios;
pub mod sim;
pub mod value;

pub use error::{Error, Result};
