use serde::{Deserialize, Serialize};

use super::Permutation;
use crate::error::{Error, Result};
use crate::hmm::{ExpandedHmm, LikelihoodTable};

/// Whether a belief was produced by an observation or by a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// `beta_k`: conditioned on `y^k` and `sigma^{k-1}`.
    PostObservation,
    /// `eta_k`: `beta_k` pushed through action `sigma_k` and one transition.
    PostTransition,
}

/// Joint posterior over `(initial physical state, current HMM state)`.
///
/// Rows follow the model's initial support `L`; `joint[l * |T| + t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    support: Vec<usize>,
    num_states: usize,
    joint: Vec<f64>,
    phase: Phase,
    step: usize,
}

impl BeliefState {
    /// The belief before any observation: `eta_0(s1, t) = nu(t) [alpha(t) = s1]`.
    pub fn prior(model: &ExpandedHmm) -> Self {
        let nt = model.num_states();
        let support = model.support().to_vec();
        let mut joint = vec![0.0; support.len() * nt];
        for (l, &s1) in support.iter().enumerate() {
            for t in 0..nt {
                if model.alpha()[t] == s1 {
                    joint[l * nt + t] = model.prior()[t];
                }
            }
        }
        let mut b = BeliefState {
            support,
            num_states: nt,
            joint,
            phase: Phase::PostTransition,
            step: 0,
        };
        b.normalize();
        b
    }

    /// `beta_1` after the first output.
    pub fn initial(model: &ExpandedHmm, y1: usize) -> Result<Self> {
        bayes_update(&Self::prior(model), y1, model)
    }

    /// Posterior encoded by a forward table after `step` outputs.
    pub fn from_table(table: &LikelihoodTable, step: usize) -> Result<Self> {
        let nt = table.num_states();
        let nl = table.support().len();
        let logw: Vec<f64> = (0..nl)
            .map(|l| table.log_scale()[l] + table.prior()[l].ln())
            .collect();
        let max = (0..nl)
            .filter(|&l| table.row(l).iter().any(|&v| v > 0.0))
            .map(|l| logw[l])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::ImpossibleObservation);
        }
        let mut joint = Vec::with_capacity(nl * nt);
        for l in 0..nl {
            let w = (logw[l] - max).exp();
            joint.extend(table.row(l).iter().map(|v| v * w));
        }
        let mut b = BeliefState {
            support: table.support().to_vec(),
            num_states: nt,
            joint,
            phase: Phase::PostObservation,
            step,
        };
        b.normalize();
        Ok(b)
    }

    fn normalize(&mut self) {
        let total: f64 = self.joint.iter().sum();
        if total > 0.0 {
            for v in &mut self.joint {
                *v /= total;
            }
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Number of outputs observed so far.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.joint[l * self.num_states..(l + 1) * self.num_states]
    }

    /// Posterior over the initial support.
    pub fn marginal(&self) -> Vec<f64> {
        (0..self.support.len()).map(|l| self.row(l).iter().sum()).collect()
    }

    /// Distribution of the current HMM state.
    pub fn current(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.num_states];
        for l in 0..self.support.len() {
            for (t, v) in self.row(l).iter().enumerate() {
                c[t] += v;
            }
        }
        c
    }

    pub fn total(&self) -> f64 {
        self.joint.iter().sum()
    }
}

fn expect_phase(b: &BeliefState, phase: Phase) -> Result<()> {
    if b.phase != phase {
        return Err(Error::InvalidParameter(format!(
            "belief is in phase {:?}, expected {:?}",
            b.phase, phase
        )));
    }
    Ok(())
}

/// Conditions a post-transition belief on output `y`.
pub fn bayes_update(eta: &BeliefState, y: usize, model: &ExpandedHmm) -> Result<BeliefState> {
    expect_phase(eta, Phase::PostTransition)?;
    if y >= model.num_outputs() {
        return Err(Error::out_of_range("output", y, model.num_outputs()));
    }
    let nt = eta.num_states;
    let mut joint = vec![0.0; eta.joint.len()];
    let mut total = 0.0;
    for l in 0..eta.support.len() {
        for &t in model.emitters(y) {
            let v = eta.joint[l * nt + t] * model.emission(y, t);
            joint[l * nt + t] = v;
            total += v;
        }
    }
    if !(total > 0.0) {
        return Err(Error::ImpossibleObservation);
    }
    for v in &mut joint {
        *v /= total;
    }
    Ok(BeliefState {
        support: eta.support.clone(),
        num_states: nt,
        joint,
        phase: Phase::PostObservation,
        step: eta.step + 1,
    })
}

/// Applies a physical permutation and then one transition.
pub fn transition_update(
    beta: &BeliefState,
    action: &Permutation,
    model: &ExpandedHmm,
) -> Result<BeliefState> {
    let lifted = model.lift(action)?;
    transition_update_lifted(beta, Some(&lifted), model)
}

/// [`transition_update`] with an action already lifted to HMM states
/// (`None` for the identity).
pub fn transition_update_lifted(
    beta: &BeliefState,
    lifted: Option<&[usize]>,
    model: &ExpandedHmm,
) -> Result<BeliefState> {
    expect_phase(beta, Phase::PostObservation)?;
    let nt = beta.num_states;
    let mut joint = vec![0.0; beta.joint.len()];
    for l in 0..beta.support.len() {
        let new = &mut joint[l * nt..(l + 1) * nt];
        for (t, &w) in beta.row(l).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let src = lifted.map_or(t, |p| p[t]);
            for (n, a) in new.iter_mut().zip(model.trans_from(src)) {
                *n += w * a;
            }
        }
    }
    Ok(BeliefState {
        support: beta.support.clone(),
        num_states: nt,
        joint,
        phase: Phase::PostTransition,
        step: beta.step,
    })
}

/// Probability of a correct MAP guess given the belief.
pub fn leaf_value(beta: &BeliefState) -> f64 {
    beta.marginal().into_iter().fold(0.0, f64::max)
}

/// `P(y | history)` for a post-transition belief.
pub fn branch_weight(eta: &BeliefState, y: usize, model: &ExpandedHmm) -> f64 {
    let nt = eta.num_states;
    let mut w = 0.0;
    for l in 0..eta.support.len() {
        for &t in model.emitters(y) {
            w += eta.joint[l * nt + t] * model.emission(y, t);
        }
    }
    w
}

/// Every output's weight and posterior; zero-probability outputs are `None`.
pub fn observe_all(eta: &BeliefState, model: &ExpandedHmm) -> Vec<Option<(f64, BeliefState)>> {
    (0..model.num_outputs())
        .map(|y| {
            let w = branch_weight(eta, y, model);
            if w > 0.0 {
                bayes_update(eta, y, model).ok().map(|b| (w, b))
            } else {
                None
            }
        })
        .collect()
}

/// Shannon entropy (nats) of the initial-state posterior.
pub fn posterior_entropy(beta: &BeliefState) -> f64 {
    -beta
        .marginal()
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}
