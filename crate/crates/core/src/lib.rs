//! Backward Monte Carlo pricing of path-dependent options on one-dimensional
//! diffusions approximated by finite Markov chains.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod generator;
pub mod matrix;
pub mod model;
pub mod normal;
pub mod pricing;
pub mod quantize;
pub mod rng;
