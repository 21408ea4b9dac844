use alloc::string::String;

use thiserror::Error;

use crate::sensitivity::ValidationReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("danger value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("interval [{lo}, {hi}] is reversed")]
    ReversedInterval { lo: f64, hi: f64 },

    #[error("interval [{lo}, {hi}] is empty")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("invalid rate function: {0}")]
    InvalidRate(ValidationReport),

    #[error("danger level must not decrease: {from} -> {to}")]
    Shrinking { from: f64, to: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}
