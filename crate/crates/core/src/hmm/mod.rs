//! Hidden Markov model representation, validation and forward inference.
//!
//! Matrices are column-stochastic: `trans[(s_next, s)] = A(s_next | s)` and
//! `out[(y, s)] = B(y | s)`.

mod expanded;
mod forward;

pub use expanded::ExpandedHmm;
pub use forward::{
    forward, forward_init, forward_step, forward_step_permuted, map_estimate, LikelihoodTable,
    MapEstimate,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Column sums within this distance of 1 are accepted as-is.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Column sums within this distance of 1 are renormalized by [`validate`].
pub const RENORM_TOL: f64 = 1e-6;

/// A finite-state, finite-output HMM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmRecord")]
pub struct Hmm {
    states: Vec<String>,
    outputs: Vec<String>,
    trans: Matrix,
    out: Matrix,
    prior: Vec<f64>,
}

#[derive(Deserialize)]
struct HmmRecord {
    #[serde(default)]
    states: Vec<String>,
    #[serde(default)]
    outputs: Vec<String>,
    trans: Matrix,
    out: Matrix,
    prior: Vec<f64>,
}

impl TryFrom<HmmRecord> for Hmm {
    type Error = Error;

    fn try_from(r: HmmRecord) -> Result<Self> {
        Hmm::with_labels(r.trans, r.out, r.prior, r.states, r.outputs)
    }
}

impl Hmm {
    /// Builds and validates a model with default numeric labels.
    pub fn new(trans: Matrix, out: Matrix, prior: Vec<f64>) -> Result<Self> {
        Hmm::with_labels(trans, out, prior, Vec::new(), Vec::new())
    }

    /// Builds and validates a model. Empty label vectors are filled with indices.
    pub fn with_labels(
        trans: Matrix,
        out: Matrix,
        prior: Vec<f64>,
        states: Vec<String>,
        outputs: Vec<String>,
    ) -> Result<Self> {
        let n = trans.cols();
        let states = if states.is_empty() {
            (0..n).map(|i| i.to_string()).collect()
        } else {
            states
        };
        let outputs = if outputs.is_empty() {
            (0..out.rows()).map(|i| i.to_string()).collect()
        } else {
            outputs
        };
        validate(Hmm {
            states,
            outputs,
            trans,
            out,
            prior,
        })
    }

    pub fn num_states(&self) -> usize {
        self.trans.cols()
    }

    pub fn num_outputs(&self) -> usize {
        self.out.rows()
    }

    pub fn trans(&self) -> &Matrix {
        &self.trans
    }

    pub fn out(&self) -> &Matrix {
        &self.out
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn state_labels(&self) -> &[String] {
        &self.states
    }

    pub fn output_labels(&self) -> &[String] {
        &self.outputs
    }
}

/// Checks dimensions and stochasticity of a model.
///
/// Columns (and the prior) off by at most [`STOCHASTIC_TOL`] are left alone,
/// those off by at most [`RENORM_TOL`] are rescaled to sum to one, anything
/// further is rejected with the offending column.
pub fn validate(mut model: Hmm) -> Result<Hmm> {
    let n = model.trans.cols();
    if n == 0 {
        return Err(Error::InvalidModel("model has no states".into()));
    }
    if model.trans.rows() != n {
        return Err(Error::dim("trans rows", n, model.trans.rows()));
    }
    if model.out.cols() != n {
        return Err(Error::dim("out columns", n, model.out.cols()));
    }
    if model.out.rows() == 0 {
        return Err(Error::InvalidModel("model has no outputs".into()));
    }
    if model.prior.len() != n {
        return Err(Error::dim("prior", n, model.prior.len()));
    }
    if model.states.len() != n {
        return Err(Error::dim("state labels", n, model.states.len()));
    }
    if model.outputs.len() != model.out.rows() {
        return Err(Error::dim("output labels", model.out.rows(), model.outputs.len()));
    }
    normalize_columns(&mut model.trans, "trans")?;
    normalize_columns(&mut model.out, "out")?;
    let mut prior = Matrix::from_row_major(n, 1, std::mem::take(&mut model.prior))?;
    normalize_columns(&mut prior, "prior")?;
    model.prior = prior.as_slice().to_vec();
    Ok(model)
}

pub(crate) fn normalize_columns(m: &mut Matrix, what: &str) -> Result<()> {
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let v = m[(r, c)];
            if !(v >= 0.0) {
                return Err(Error::NegativeEntry {
                    what: what.into(),
                    row: r,
                    col: c,
                    value: v,
                });
            }
            if v > 1.0 + STOCHASTIC_TOL {
                return Err(Error::NotStochastic {
                    what: what.into(),
                    column: c,
                    sum: v,
                });
            }
        }
    }
    let sums = m.column_sums();
    for (c, &sum) in sums.iter().enumerate() {
        let dev = (sum - 1.0).abs();
        if dev <= STOCHASTIC_TOL {
            continue;
        }
        if dev > RENORM_TOL {
            return Err(Error::NotStochastic {
                what: what.into(),
                column: c,
                sum,
            });
        }
        for r in 0..m.rows() {
            m[(r, c)] /= sum;
        }
    }
    Ok(())
}
