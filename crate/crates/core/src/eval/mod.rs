//! Measurement infidelity: exact enumeration, the total-count histogram
//! baseline, Monte Carlo sampling and parameter sweeps.

mod exact;
mod histogram;
mod montecarlo;
mod sweep;

pub use exact::{exact_infidelity, EvalOptions, DEFAULT_EVAL_CAP};
pub use histogram::{histogram_infidelity, total_count_distribution};
pub use montecarlo::simulate;
pub use sweep::{sweep, Grid, Method, SweepConfig, SweepPoint, SweepRow, RATIO_METHOD};

use serde::{Deserialize, Serialize};

use crate::hmm::ExpandedHmm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMethod {
    Exact,
    MonteCarlo,
    Histogram,
}

/// Outcome of evaluating a policy (or the histogram baseline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: EvalMethod,
    pub policy: String,
    pub n: usize,
    pub infidelity: f64,
    pub fidelity: f64,
    /// Labels of the initial support, in row order.
    pub initial_states: Vec<String>,
    pub prior: Vec<f64>,
    /// `P(estimate != s1 | s1)` for each initial state.
    pub per_state_error: Vec<f64>,
    /// Nonzero-probability output sequences enumerated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequences: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// Binomial standard error of a sampled estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl EvalReport {
    /// Builds a report whose infidelity is the prior average of the
    /// per-state errors.
    pub(crate) fn from_errors(
        method: EvalMethod,
        policy: &str,
        model: &ExpandedHmm,
        n: usize,
        per_state_error: Vec<f64>,
    ) -> Self {
        let prior = model.physical_prior().to_vec();
        let infidelity: f64 = prior.iter().zip(&per_state_error).map(|(p, e)| p * e).sum();
        EvalReport {
            method,
            policy: policy.to_string(),
            n,
            infidelity,
            fidelity: 1.0 - infidelity,
            initial_states: model
                .support()
                .iter()
                .map(|&s| model.physical_labels()[s].clone())
                .collect(),
            prior,
            per_state_error,
            sequences: None,
            trials: None,
            stderr: None,
            seed: None,
        }
    }
}
