use thiserror::Error;

/// Errors raised by validation, solving, and the path oracle.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {field}: expected {expected}, got {got}")]
    DimensionMismatch {
        field: String,
        expected: String,
        got: String,
    },

    #[error("row {row} of stage {stage} sums to {sum} (deviation {deviation:e} exceeds tolerance)")]
    RowSumViolation {
        stage: usize,
        row: String,
        sum: f64,
        deviation: f64,
    },

    #[error("negative or non-finite entry {value} in {field}")]
    NegativeEntry { field: String, value: f64 },

    #[error("initial distribution {field} puts mass on absorbing state {state}")]
    InitialMassOnAbsorbing { field: String, state: String },

    #[error("{field} does not sum to 1 (sum = {sum})")]
    NotNormalized { field: String, sum: f64 },

    #[error("total first-arrival mass in nu_hat is {total}, which exceeds 1")]
    MassExceedsOne { total: f64 },

    #[error("duplicate or overlapping state label {0:?}")]
    DuplicateLabel(String),

    #[error("empty {0}: at least one state is required")]
    EmptyStateSet(&'static str),

    #[error("invalid value for {field}: {reason}")]
    InvalidValue { field: String, reason: String },

    #[error("Sinkhorn iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("division blowup at {what} index {index}: positive target {target} against zero mass")]
    DivisionBlowup {
        what: &'static str,
        index: usize,
        target: f64,
    },

    #[error("scaling dimensions do not match the prior: {0}")]
    ScalingMismatch(String),

    #[error("synthesized row {row} of stage {stage} sums to {sum}")]
    NonStochasticOutput { stage: usize, row: usize, sum: f64 },

    #[error("exp range guard: beta * max|U| = {0} exceeds 700")]
    Overflow(f64),

    #[error("path space has {size} paths, above the enumeration cap {cap}")]
    StateSpaceTooLarge { size: f64, cap: usize },

    #[error("iterative proportional fitting did not converge in {sweeps} sweeps (violation {violation:e})")]
    IpfNotConverged { sweeps: usize, violation: f64 },

    #[error("problem file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
