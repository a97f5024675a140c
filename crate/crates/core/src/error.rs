//! Error type for data-dependent failures.
//!
//! Shape mismatches inside the tensor engine are programmer errors and
//! panic with a message naming both shapes; everything that depends on
//! runtime inputs (ids, configs, metric degeneracies) comes back as a
//! `CoreError` so callers can map it to an exit code or report.

use alloc::string::String;
use core::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoreError {
    /// An instance referenced an id outside the configured vocabulary.
    /// Carries the field name and the offending id.
    OutOfVocab { field: &'static str, id: u32, vocab: usize },
    /// Generator or model configuration violates an invariant.
    InvalidConfig(String),
    /// A metric is undefined on the given inputs (e.g. single-class AUC).
    UndefinedMetric(String),
    /// Training data and model configuration disagree.
    DataMismatch(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::OutOfVocab { field, id, vocab } => {
                write!(f, "out-of-vocab id {id} for field `{field}` (vocab size {vocab})")
            }
            CoreError::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            CoreError::UndefinedMetric(msg) => write!(f, "undefined metric: {msg}"),
            CoreError::DataMismatch(msg) => write!(f, "data mismatch: {msg}"),
        }
    }
}

impl core::error::Error for CoreError {}
