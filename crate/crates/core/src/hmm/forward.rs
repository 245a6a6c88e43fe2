//! Forward recursion over `(initial physical state, current HMM state)`.

use super::{ExpandedHmm, STOCHASTIC_TOL};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Columns whose largest entry drops below this are rescaled to unit max.
pub const RESCALE_THRESHOLD: f64 = 1e-30;

/// Scaled values of `P(y^k, t_k | s_1)` for every `s_1` in the initial support.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodTable {
    num_states: usize,
    support: Vec<usize>,
    prior: Vec<f64>,
    values: Vec<f64>,
    log_scale: Vec<f64>,
}

impl LikelihoodTable {
    /// Builds a table directly from per-initial-state rows of likelihoods.
    pub fn from_rows(support: Vec<usize>, prior: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if support.len() != rows.len() {
            return Err(Error::dim("likelihood rows", support.len(), rows.len()));
        }
        if prior.len() != support.len() {
            return Err(Error::dim("likelihood prior", support.len(), prior.len()));
        }
        let num_states = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(num_states * rows.len());
        for r in &rows {
            if r.len() != num_states {
                return Err(Error::dim("likelihood row", num_states, r.len()));
            }
            if r.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidParameter("negative likelihood".into()));
            }
            values.extend_from_slice(r);
        }
        Ok(LikelihoodTable {
            num_states,
            log_scale: vec![0.0; support.len()],
            support,
            prior,
            values,
        })
    }

    /// Physical states indexing the rows.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Scaled row for the `l`-th initial state.
    pub fn row(&self, l: usize) -> &[f64] {
        &self.values[l * self.num_states..(l + 1) * self.num_states]
    }

    pub fn log_scale(&self) -> &[f64] {
        &self.log_scale
    }

    /// Unscaled `P(y^k, t | s_1)`. Underflows to zero for very long sequences.
    pub fn value(&self, l: usize, t: usize) -> f64 {
        self.row(l)[t] * self.log_scale[l].exp()
    }

    /// `ln P(y^k | s_1)` per initial state (`-inf` for impossible sequences).
    pub fn log_likelihoods(&self) -> Vec<f64> {
        (0..self.support.len())
            .map(|l| self.row(l).iter().sum::<f64>().ln() + self.log_scale[l])
            .collect()
    }

    /// `P(y^k | s_1)` per initial state.
    pub fn likelihoods(&self) -> Vec<f64> {
        self.log_likelihoods().into_iter().map(f64::exp).collect()
    }

    fn rescale(&mut self) {
        let n = self.num_states;
        for l in 0..self.support.len() {
            let row = &mut self.values[l * n..(l + 1) * n];
            let max = row.iter().copied().fold(0.0, f64::max);
            if max > 0.0 && max < RESCALE_THRESHOLD {
                for v in row.iter_mut() {
                    *v /= max;
                }
                self.log_scale[l] += max.ln();
            }
        }
    }
}

/// Likelihood table after the first output.
pub fn forward_init(model: &ExpandedHmm, y1: usize) -> Result<LikelihoodTable> {
    check_output(model, y1)?;
    let nt = model.num_states();
    let support = model.support().to_vec();
    let mut values = vec![0.0; support.len() * nt];
    for (l, &s1) in support.iter().enumerate() {
        let mass: f64 = (0..nt)
            .filter(|&t| model.alpha()[t] == s1)
            .map(|t| model.prior()[t])
            .sum();
        if mass <= 0.0 {
            return Err(Error::ZeroPriorMass(s1));
        }
        for t in 0..nt {
            if model.alpha()[t] == s1 {
                values[l * nt + t] = model.emission(y1, t) * model.prior()[t] / mass;
            }
        }
    }
    let mut table = LikelihoodTable {
        num_states: nt,
        prior: model.physical_prior().to_vec(),
        log_scale: vec![0.0; support.len()],
        support,
        values,
    };
    table.rescale();
    Ok(table)
}

/// One recursion step with an explicit (possibly action-modified) transition matrix.
pub fn forward_step(
    model: &ExpandedHmm,
    table: &LikelihoodTable,
    y: usize,
    effective_trans: &Matrix,
) -> Result<LikelihoodTable> {
    check_output(model, y)?;
    let nt = model.num_states();
    if effective_trans.rows() != nt || effective_trans.cols() != nt {
        return Err(Error::dim("effective transition matrix", nt, effective_trans.rows()));
    }
    for (c, sum) in effective_trans.column_sums().into_iter().enumerate() {
        if (sum - 1.0).abs() > STOCHASTIC_TOL || effective_trans.column(c).iter().any(|v| *v < 0.0) {
            return Err(Error::NotStochastic {
                what: "effective transition matrix".into(),
                column: c,
                sum,
            });
        }
    }
    let by_source = effective_trans.transpose();
    Ok(step_with(model, table, y, |t| by_source.row(t)))
}

/// One recursion step after applying a permutation of the HMM states
/// (`lifted[t]` is the image of `t`); `None` means no action.
pub fn forward_step_permuted(
    model: &ExpandedHmm,
    table: &LikelihoodTable,
    y: usize,
    lifted: Option<&[usize]>,
) -> Result<LikelihoodTable> {
    check_output(model, y)?;
    Ok(match lifted {
        Some(p) => step_with(model, table, y, |t| model.trans_from(p[t])),
        None => step_with(model, table, y, |t| model.trans_from(t)),
    })
}

fn step_with<'a>(
    model: &ExpandedHmm,
    table: &LikelihoodTable,
    y: usize,
    column: impl Fn(usize) -> &'a [f64],
) -> LikelihoodTable {
    let nt = table.num_states;
    let emitters = model.emitters(y);
    let mut values = vec![0.0; table.values.len()];
    for l in 0..table.support.len() {
        let old = table.row(l);
        let new = &mut values[l * nt..(l + 1) * nt];
        for (tp, &w) in old.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let col = column(tp);
            for &t in emitters {
                new[t] += w * col[t];
            }
        }
        for &t in emitters {
            new[t] *= model.emission(y, t);
        }
    }
    let mut next = LikelihoodTable {
        num_states: nt,
        support: table.support.clone(),
        prior: table.prior.clone(),
        values,
        log_scale: table.log_scale.clone(),
    };
    next.rescale();
    next
}

/// Runs the recursion over a whole output sequence; `actions[k]` is the
/// lifted permutation applied after output `k` (or `None`).
pub fn forward(
    model: &ExpandedHmm,
    outputs: &[usize],
    actions: &[Option<Vec<usize>>],
) -> Result<LikelihoodTable> {
    let (&first, rest) = outputs
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("empty output sequence".into()))?;
    let mut table = forward_init(model, first)?;
    for (k, &y) in rest.iter().enumerate() {
        let lifted = actions.get(k).and_then(|a| a.as_deref());
        table = forward_step_permuted(model, &table, y, lifted)?;
    }
    Ok(table)
}

fn check_output(model: &ExpandedHmm, y: usize) -> Result<()> {
    if y >= model.num_outputs() {
        return Err(Error::out_of_range("output", y, model.num_outputs()));
    }
    Ok(())
}

/// Result of maximum a posteriori initial-state inference.
#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    /// Physical state index.
    pub state: usize,
    /// Position of `state` within the initial support.
    pub index: usize,
    /// Posterior over the initial support.
    pub posterior: Vec<f64>,
}

/// MAP estimate of the initial state; ties go to the lowest state index.
///
/// With a uniform prior over the support this is the maximum likelihood
/// estimate and the posterior is the normalized vector of column sums.
pub fn map_estimate(table: &LikelihoodTable) -> Result<MapEstimate> {
    let logw: Vec<f64> = table
        .log_likelihoods()
        .into_iter()
        .zip(&table.prior)
        .map(|(ll, p)| ll + p.ln())
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::ImpossibleObservation);
    }
    let weights: Vec<f64> = logw.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let posterior: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let index = crate::linalg::argmax(&logw);
    Ok(MapEstimate {
        state: table.support[index],
        index,
        posterior,
    })
}
