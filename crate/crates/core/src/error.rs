use thiserror::Error;

use crate::model::RegimeKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("schedule has {got} phases but the system has {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("power at node {node}, phase {phase} is {value} (must be finite and non-negative)")]
    InvalidPower {
        node: usize,
        phase: usize,
        value: f64,
    },

    #[error("operation requires {expected}, but the parameters are in regime {actual}")]
    RegimeMismatch {
        expected: &'static str,
        actual: RegimeKind,
    },

    #[error("schedule carries power supplements in phase {phase}; only first-phase supplements are representable")]
    NotAggregated { phase: usize },

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("grid search: {0}")]
    Grid(String),
}
