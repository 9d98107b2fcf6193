//! Trace-driven calibration, simulation, and evaluation of human-in-the-loop
//! LLM cascades.
//!
//! Two systems are modeled. "Ask" pairs a reasoning model with a human
//! expert: the model answers unless its own output-token count crosses a
//! calibrated threshold, in which case the query is deferred. "Fail Fast,
//! or Ask" fronts that system with a faster non-reasoning model that, based
//! on its confidence, answers directly, passes the query on, or sends it
//! straight to the human ("failing fast").
//!
//! The crate ingests per-model JSONL run logs (or generates synthetic ones),
//! calibrates thresholds from empirical quantiles, routes every query
//! per-record with exact latency and cost accounting, and computes
//! accuracy-rejection curves, AUARC, savings tables, latency-drag
//! decompositions, and token-length correctness diagnostics.
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability, or the `askfast` binary for the same pipeline as CLI
//! subcommands.

pub mod calibrate;
pub mod cascade;
pub mod collector;
pub mod error;
pub mod metrics;
pub mod report;
pub mod smooth;
pub mod synth;
pub mod trace;

pub mod cli;

pub use calibrate::{calibrate_ask, calibrate_ffoa, AskPolicy, PolicyConfig};
pub use cascade::{nr_action, realized_rates, simulate_ask, simulate_ffoa, Action, Outcome, Route};
pub use error::{Error, Result};
pub use metrics::{
    accuracy_rejection_curve, auarc, conditional_accuracy, ideal_latency, latency_drag,
    savings_table, AuarcSummary, CurvePoint, System,
};
pub use smooth::{loess_fit, LoessFit};
pub use synth::{generate, SynthSpec};
pub use trace::{ingest, join, JoinedRecord, ModelRole, Trace, TraceRecord};
