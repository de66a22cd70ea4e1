//! Layer-constrained proposal of candidate configurations.
//!
//! MDL and MCL may edit only the mechanism θ; SSL1 and SSL2 only the
//! schedule σ. Every provider output passes [`check_frozen`] and config
//! validation before it leaves this module.

mod llm;
mod stub;

pub use llm::{LlmProvider, LlmSettings, API_KEY_ENV};
pub use stub::{canonicalize, StubProvider};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::Task;
use crate::solvers::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    #[serde(rename = "MDL")]
    Mdl,
    #[serde(rename = "MCL")]
    Mcl,
    #[serde(rename = "SSL1")]
    Ssl1,
    #[serde(rename = "SSL2")]
    Ssl2,
}

impl Layer {
    /// Execution order within one iteration.
    pub const ALL: [Layer; 4] = [Layer::Mdl, Layer::Mcl, Layer::Ssl1, Layer::Ssl2];

    pub fn edits_mechanism(self) -> bool {
        matches!(self, Layer::Mdl | Layer::Mcl)
    }

    pub fn index(self) -> u64 {
        self as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            Layer::Mdl => "MDL",
            Layer::Mcl => "MCL",
            Layer::Ssl1 => "SSL1",
            Layer::Ssl2 => "SSL2",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parent metrics handed to the provider.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub ell_bar: f64,
    pub k_bar: f64,
    pub t_bar: f64,
    /// Per-group terminal log-residuals.
    pub group_ell: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationRequest {
    pub layer: Layer,
    pub task: Task,
    pub parent: SolverConfig,
    pub feedback: Feedback,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationResponse {
    pub candidate: SolverConfig,
    pub note: String,
}

#[derive(Debug, Error)]
pub enum MutationError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("invalid reply: {0}")]
    InvalidReply(String),
    #[error("frozen half modified by {0} proposal")]
    FrozenViolation(Layer),
    #[error("parent config invalid: {0}")]
    InvalidParent(String),
    #[error("audit log: {0}")]
    Audit(String),
}

pub trait MutationProvider: Send + Sync {
    fn name(&self) -> &str;
    fn propose(&self, request: &MutationRequest) -> Result<MutationResponse, MutationError>;
}

/// True when `candidate` leaves the half that `layer` may not edit untouched.
pub fn check_frozen(layer: Layer, parent: &SolverConfig, candidate: &SolverConfig) -> bool {
    if layer.edits_mechanism() {
        bits_equal(&parent.schedule, &candidate.schedule)
    } else {
        bits_equal(&parent.mechanism, &candidate.mechanism)
    }
}

// Serialized comparison is exact for every float (float_roundtrip) and
// distinguishes -0.0 from 0.0, unlike PartialEq.
fn bits_equal<T: Serialize>(a: &T, b: &T) -> bool {
    serde_json::to_string(a).ok() == serde_json::to_string(b).ok()
}

/// Shared post-condition for every provider.
pub(crate) fn admit(request: &MutationRequest, candidate: &SolverConfig) -> Result<(), MutationError> {
    candidate
        .validate_for(request.task)
        .map_err(|e| MutationError::InvalidReply(e.to_string()))?;
    if !check_frozen(request.layer, &request.parent, candidate) {
        return Err(MutationError::FrozenViolation(request.layer));
    }
    Ok(())
}
