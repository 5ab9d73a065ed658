#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Semi-Markov jump processes in continuous time and duration: transition
//! probabilities, cashflows and reserves via Poissonian uniformization.

pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod grid;
pub mod intensity;
pub mod kernel;
pub mod linalg;
pub mod monte_carlo;
pub mod pi;
pub mod quadrature;
pub mod special;
pub mod valuation;

pub use error::{Error, Result};
