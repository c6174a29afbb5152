//! Deterministic federated-learning robustness lab.
//!
//! The crate simulates a classification FL system under untargeted attacks
//! and robust aggregation. The centerpiece is Gram-matrix norm filtering: the
//! server probes each submitted model with a tiny auxiliary dataset (at most
//! one sample per class), scores the model by the Frobenius norm of the Gram
//! matrix of its row-normalized class embeddings, and drops the
//! highest-scoring fraction before averaging. Alongside it live the usual
//! suspects: LIE, Fang, MinMax/MinSum, MPAF and label-flip attacks, plus
//! trimmed mean, Krum, Bulyan, RFA and friends for comparison.
//!
//! Everything is seeded and deterministic: two runs with the same config
//! produce byte-identical metrics. See the `examples/` directory for runnable
//! tours of each capability, and the `fedgram` binary for the experiment
//! runner (`validate` / `run` / `sweep`).

// `!(x > 0.0)` guards deliberately reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod attack;
pub mod config;
pub mod data;
pub mod error;
pub mod math;
pub mod model;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
