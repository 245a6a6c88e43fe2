use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Hmm;
use crate::builders::Partition;
use crate::error::{Error, Result};
use crate::policy::Permutation;

const DETERMINISTIC_TOL: f64 = 1e-12;

/// An HMM whose states project onto physical states.
///
/// Two layouts are supported:
///
/// * outcome-expanded: states are pairs `(s, o)` of a physical state and the
///   output recorded while entering it, `alpha` and `rho` give the two
///   components, the output matrix is deterministic and the prior sits on
///   `o = 0`;
/// * trivial: the HMM states are the physical states (`alpha` is the
///   identity, no `rho`) and the output matrix is arbitrary.
///
/// The initial support `L` is the set of physical states with nonzero prior
/// mass; inference targets an element of `L`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ExpandedRecord", into = "ExpandedRecord")]
pub struct ExpandedHmm {
    hmm: Hmm,
    physical_states: Vec<String>,
    alpha: Vec<usize>,
    rho: Option<Vec<usize>>,
    binning: Option<Partition>,
    support: Vec<usize>,
    physical_prior: Vec<f64>,
    /// `trans_by_source[t * |T| + t2] = A(t2 | t)`.
    trans_by_source: Vec<f64>,
    /// States that can emit each output.
    emitters: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct ExpandedRecord {
    #[serde(flatten)]
    hmm: Hmm,
    physical_states: Vec<String>,
    alpha: Vec<usize>,
    #[serde(default)]
    rho: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    binning: Option<Partition>,
}

impl TryFrom<ExpandedRecord> for ExpandedHmm {
    type Error = Error;

    fn try_from(r: ExpandedRecord) -> Result<Self> {
        let mut m = match r.rho {
            Some(rho) => ExpandedHmm::outcome_expanded(r.hmm, r.physical_states, r.alpha, rho)?,
            None => {
                if r.alpha.iter().enumerate().any(|(i, &a)| i != a)
                    || r.alpha.len() != r.hmm.num_states()
                {
                    return Err(Error::InvalidModel(
                        "a model without rho must use the identity alpha".into(),
                    ));
                }
                let mut m = ExpandedHmm::trivial(r.hmm);
                if r.physical_states.len() == m.num_physical() {
                    m.physical_states = r.physical_states;
                }
                m
            }
        };
        m.binning = r.binning;
        Ok(m)
    }
}

impl From<ExpandedHmm> for ExpandedRecord {
    fn from(m: ExpandedHmm) -> Self {
        ExpandedRecord {
            hmm: m.hmm,
            physical_states: m.physical_states,
            alpha: m.alpha,
            rho: m.rho,
            binning: m.binning,
        }
    }
}

impl ExpandedHmm {
    /// Treats every HMM state as a physical state.
    pub fn trivial(hmm: Hmm) -> Self {
        let n = hmm.num_states();
        let physical_states = hmm.state_labels().to_vec();
        Self::assemble(hmm, physical_states, (0..n).collect(), None)
    }

    /// Builds an outcome-expanded model over pairs `(alpha[t], rho[t])`.
    pub fn outcome_expanded(
        hmm: Hmm,
        physical_states: Vec<String>,
        alpha: Vec<usize>,
        rho: Vec<usize>,
    ) -> Result<Self> {
        let nt = hmm.num_states();
        let ny = hmm.num_outputs();
        let ns = physical_states.len();
        if ns == 0 {
            return Err(Error::InvalidModel("no physical states".into()));
        }
        if nt != ns * ny {
            return Err(Error::dim("expanded state count |S|*|Y|", ns * ny, nt));
        }
        if alpha.len() != nt {
            return Err(Error::dim("alpha", nt, alpha.len()));
        }
        if rho.len() != nt {
            return Err(Error::dim("rho", nt, rho.len()));
        }
        let mut seen = vec![false; nt];
        for t in 0..nt {
            if alpha[t] >= ns {
                return Err(Error::out_of_range("alpha value", alpha[t], ns));
            }
            if rho[t] >= ny {
                return Err(Error::out_of_range("rho value", rho[t], ny));
            }
            let key = alpha[t] * ny + rho[t];
            if seen[key] {
                return Err(Error::InvalidModel(format!(
                    "(alpha, rho) not injective at state {t}"
                )));
            }
            seen[key] = true;
            for y in 0..ny {
                let expect = if y == rho[t] { 1.0 } else { 0.0 };
                if (hmm.out()[(y, t)] - expect).abs() > DETERMINISTIC_TOL {
                    return Err(Error::InvalidModel(format!(
                        "output matrix not deterministic at state {t}"
                    )));
                }
            }
            if rho[t] != 0 && hmm.prior()[t] != 0.0 {
                return Err(Error::InvalidModel(format!(
                    "prior mass on state {t} with nonzero remembered output"
                )));
            }
        }
        Ok(Self::assemble(hmm, physical_states, alpha, Some(rho)))
    }

    fn assemble(
        hmm: Hmm,
        physical_states: Vec<String>,
        alpha: Vec<usize>,
        rho: Option<Vec<usize>>,
    ) -> Self {
        let nt = hmm.num_states();
        let ns = physical_states.len();
        let mut mass = vec![0.0; ns];
        for t in 0..nt {
            mass[alpha[t]] += hmm.prior()[t];
        }
        let support: Vec<usize> = (0..ns).filter(|&s| mass[s] > 0.0).collect();
        let total: f64 = support.iter().map(|&s| mass[s]).sum();
        let physical_prior = support.iter().map(|&s| mass[s] / total).collect();
        let trans_by_source = hmm.trans().transpose().as_slice().to_vec();
        let emitters = (0..hmm.num_outputs())
            .map(|y| (0..nt).filter(|&t| hmm.out()[(y, t)] > 0.0).collect())
            .collect();
        ExpandedHmm {
            hmm,
            physical_states,
            alpha,
            rho,
            binning: None,
            support,
            physical_prior,
            trans_by_source,
            emitters,
        }
    }

    pub(crate) fn with_binning(mut self, partition: Partition) -> Self {
        self.binning = Some(partition);
        self
    }

    pub fn hmm(&self) -> &Hmm {
        &self.hmm
    }

    /// Number of HMM states `|T|`.
    pub fn num_states(&self) -> usize {
        self.hmm.num_states()
    }

    pub fn num_outputs(&self) -> usize {
        self.hmm.num_outputs()
    }

    pub fn num_physical(&self) -> usize {
        self.physical_states.len()
    }

    pub fn physical_labels(&self) -> &[String] {
        &self.physical_states
    }

    pub fn alpha(&self) -> &[usize] {
        &self.alpha
    }

    pub fn rho(&self) -> Option<&[usize]> {
        self.rho.as_deref()
    }

    pub fn is_outcome_expanded(&self) -> bool {
        self.rho.is_some()
    }

    /// Partition applied to produce this model, if any.
    pub fn binning(&self) -> Option<&Partition> {
        self.binning.as_ref()
    }

    /// Physical initial states with nonzero prior mass, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Prior over [`support`](Self::support).
    pub fn physical_prior(&self) -> &[f64] {
        &self.physical_prior
    }

    pub fn prior(&self) -> &[f64] {
        self.hmm.prior()
    }

    /// `A(. | t)` as a contiguous slice.
    #[inline]
    pub fn trans_from(&self, t: usize) -> &[f64] {
        let n = self.num_states();
        &self.trans_by_source[t * n..(t + 1) * n]
    }

    #[inline]
    pub fn emission(&self, y: usize, t: usize) -> f64 {
        self.hmm.out()[(y, t)]
    }

    /// States with `B(y | t) > 0`.
    #[inline]
    pub fn emitters(&self, y: usize) -> &[usize] {
        &self.emitters[y]
    }

    /// Index of `(s, o)` in an outcome-expanded model.
    pub fn state_index(&self, s: usize, o: usize) -> Option<usize> {
        let rho = self.rho.as_ref()?;
        (0..self.num_states()).find(|&t| self.alpha[t] == s && rho[t] == o)
    }

    /// The permutation of `T` induced by a physical permutation: `(s, o) -> (sigma(s), o)`.
    pub fn lift(&self, perm: &Permutation) -> Result<Vec<usize>> {
        if perm.len() != self.num_physical() {
            return Err(Error::InvalidAction(format!(
                "permutation acts on {} states, model has {} physical states",
                perm.len(),
                self.num_physical()
            )));
        }
        match &self.rho {
            None => Ok(perm.as_slice().to_vec()),
            Some(rho) => {
                let index: HashMap<(usize, usize), usize> = (0..self.num_states())
                    .map(|t| ((self.alpha[t], rho[t]), t))
                    .collect();
                Ok((0..self.num_states())
                    .map(|t| index[&(perm.apply(self.alpha[t]), rho[t])])
                    .collect())
            }
        }
    }
}
