//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: field '{field}' out of range: {message}")]
    OutOfRange {
        line: usize,
        field: &'static str,
        message: String,
    },

    #[error("line {line}: expected role {expected}, found {found}")]
    RoleMismatch {
        line: usize,
        expected: String,
        found: String,
    },

    #[error("duplicate record for (query_id, model_id) = ({query_id}, {model_id}) at line {line}")]
    DuplicateRecord {
        line: usize,
        query_id: String,
        model_id: String,
    },

    #[error("duplicate query_id '{query_id}' on the {side} side of the join")]
    DuplicateQueryId { query_id: String, side: &'static str },

    #[error("non-reasoning record '{query_id}' is missing p_true")]
    MissingPTrue { query_id: String },

    #[error("join produced no matched records")]
    EmptyJoin,

    #[error("operation requires a nonempty trace")]
    EmptyTrace,

    #[error("empirical quantile requires a nonempty input")]
    EmptyQuantileInput,

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("parameter '{name}' = {value} violates: {constraint}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("infeasible configuration: fail-fast rate r - (1-u)*r_cond = {rate} is negative (u={u}, r={r}, r_cond={r_cond})")]
    InfeasibleConfig {
        u: f64,
        r: f64,
        r_cond: f64,
        rate: f64,
    },

    #[error("passed subset is empty at utilization {u}; cannot calibrate the reasoning-model token threshold")]
    EmptyPassedSubset { u: f64 },

    #[error("no answered outcomes; conditional accuracy is undefined")]
    NoAnsweredOutcomes,

    #[error("curve is empty")]
    EmptyCurve,

    #[error("trace has {n} records, fewer than the {bins} requested bins")]
    TraceSmallerThanBins { n: usize, bins: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("http request failed: {0}")]
    Http(String),

    #[error("server response missing usage data; cost cannot be computed (query_id {query_id})")]
    MissingUsage { query_id: String },

    #[error("unexpected response shape: {0}")]
    ApiShape(String),
}

impl Error {
    /// Parameter name for machine-readable CLI error reports, when the error
    /// is attributable to a single named input.
    pub fn parameter(&self) -> Option<&'static str> {
        match self {
            Error::InvalidParam { name, .. } => Some(name),
            _ => None,
        }
    }
}
