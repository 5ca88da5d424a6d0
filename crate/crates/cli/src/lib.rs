//! Batch front end: JSON experiment configs, built-in reproduction runs and
//! CSV/table reporting.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod report;
pub mod reproduce;
pub mod run;

use backmc_core::chain::ChainError;
use backmc_core::generator::GeneratorError;
use backmc_core::model::ModelError;
use backmc_core::pricing::PricingError;
use backmc_core::quantize::QuantizeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent configuration (exit 2).
    #[error("config error: {0}")]
    Config(String),
    /// Failure while building or pricing (exit 1).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

macro_rules! runtime_from {
    ($ty:ty, $ctx:literal) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(format!(concat!($ctx, ": {}"), e))
            }
        }
    };
}

runtime_from!(ModelError, "model");
runtime_from!(QuantizeError, "quantize");
runtime_from!(GeneratorError, "generator");
runtime_from!(ChainError, "chain");
runtime_from!(PricingError, "pricing");
runtime_from!(std::io::Error, "io");
runtime_from!(csv::Error, "csv");
