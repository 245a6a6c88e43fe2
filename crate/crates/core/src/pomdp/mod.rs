//! Reduction of the adaptive readout problem to a finite-horizon POMDP.
//!
//! States are triples `(t, l, k)`: the current HMM state, the initial
//! physical state being remembered, and the step counter. Actions are the
//! permutations followed by one decision action per initial state. A decision
//! taken before step `n` behaves like the identity and earns nothing; at step
//! `n` every action leaves the state unchanged and the decision matching `l`
//! earns reward 1. The initial output is drawn from the observation
//! distribution of the start state, so a policy sees `y1` before its first
//! action.

mod cassandra;

pub use cassandra::{read_cassandra, write_cassandra, parse_cassandra, to_cassandra_string};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hmm::ExpandedHmm;
use crate::linalg::{argmax, CompensatedSum};
use crate::policy::{check_tree_size, ActionSet, LookupPolicy, TIE_TOLERANCE};

/// Largest POMDP state space [`to_pomdp`] will build.
pub const MAX_POMDP_STATES: usize = 1_000_000;

/// A finite POMDP with sparse transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub start: Vec<f64>,
    /// `trans[a][s]` lists `(s', P(s' | s, a))` with nonzero probability.
    pub trans: Vec<Vec<Vec<(usize, f64)>>>,
    /// `obs[a][s'][o] = O(o | s', a)`.
    pub obs: Vec<Vec<Vec<f64>>>,
    /// `reward[a][s]`, earned for taking `a` in `s`.
    pub reward: Vec<Vec<f64>>,
}

impl PomdpModel {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    /// Checks dimensions and that every distribution sums to one.
    pub fn validate(&self) -> Result<()> {
        let ns = self.num_states();
        let na = self.num_actions();
        let no = self.num_observations();
        let close = |s: f64| (s - 1.0).abs() <= 1e-9;
        if self.start.len() != ns {
            return Err(Error::dim("start distribution", ns, self.start.len()));
        }
        if !close(self.start.iter().sum()) {
            return Err(Error::InvalidModel("start distribution does not sum to 1".into()));
        }
        if self.trans.len() != na || self.obs.len() != na || self.reward.len() != na {
            return Err(Error::dim("per-action tables", na, self.trans.len()));
        }
        for a in 0..na {
            if self.trans[a].len() != ns || self.obs[a].len() != ns || self.reward[a].len() != ns {
                return Err(Error::dim("per-state tables", ns, self.trans[a].len()));
            }
            for s in 0..ns {
                let sum: f64 = self.trans[a][s].iter().map(|&(_, p)| p).sum();
                if !close(sum) || self.trans[a][s].iter().any(|&(t, p)| t >= ns || p < 0.0) {
                    return Err(Error::NotStochastic {
                        what: format!("transition of action {}", self.actions[a]),
                        column: s,
                        sum,
                    });
                }
                if self.obs[a][s].len() != no || !close(self.obs[a][s].iter().sum()) {
                    return Err(Error::NotStochastic {
                        what: format!("observation of action {}", self.actions[a]),
                        column: s,
                        sum: self.obs[a][s].iter().sum(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Index of state `(t, l, k)` with `k` counted from 1.
pub fn state_index(num_hmm_states: usize, support_len: usize, t: usize, l: usize, k: usize) -> usize {
    ((k - 1) * support_len + l) * num_hmm_states + t
}

/// Builds the POMDP whose expected total reward under a policy equals that
/// policy's measurement fidelity.
pub fn to_pomdp(model: &ExpandedHmm, actions: &ActionSet, n: usize) -> Result<PomdpModel> {
    if n == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    let nt = model.num_states();
    let support = model.support();
    let nl = support.len();
    let size = nt
        .checked_mul(nl)
        .and_then(|x| x.checked_mul(n))
        .filter(|&x| x <= MAX_POMDP_STATES)
        .ok_or_else(|| Error::work_cap("POMDP states", (nt * nl) as f64 * n as f64, MAX_POMDP_STATES as f64))?;
    let lifted = actions.lift(model)?;
    let ny = model.num_outputs();
    let idx = |t, l, k| state_index(nt, nl, t, l, k);

    let mut states = Vec::with_capacity(size);
    for k in 1..=n {
        for l in 0..nl {
            for t in 0..nt {
                states.push(format!("s{t}_l{}_k{k}", support[l]));
            }
        }
    }
    let mut action_names: Vec<String> = actions
        .actions()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.name()
                .map(|s| s.replace(|c: char| !c.is_ascii_alphanumeric() && c != '_', "_"))
                .unwrap_or_else(|| format!("perm{i}"))
        })
        .collect();
    action_names.extend(support.iter().map(|s| format!("decide_{s}")));
    let observations = (0..ny).map(|y| format!("o{y}")).collect();

    let mut start = vec![0.0; size];
    for (l, &s1) in support.iter().enumerate() {
        for t in 0..nt {
            if model.alpha()[t] == s1 {
                start[idx(t, l, 1)] = model.prior()[t];
            }
        }
    }

    let na = action_names.len();
    let obs_row = |s: usize| -> Vec<f64> {
        let t = s % nt;
        (0..ny).map(|y| model.emission(y, t)).collect()
    };
    let obs_table: Vec<Vec<f64>> = (0..size).map(obs_row).collect();

    let mut trans = Vec::with_capacity(na);
    let mut reward = Vec::with_capacity(na);
    for a in 0..na {
        let perm = if a < actions.len() { Some(lifted.map(a)) } else { None };
        let mut rows = Vec::with_capacity(size);
        let mut r = vec![0.0; size];
        for k in 1..=n {
            for l in 0..nl {
                for t in 0..nt {
                    let s = idx(t, l, k);
                    if k == n {
                        rows.push(vec![(s, 1.0)]);
                        if perm.is_none() && a - actions.len() == l {
                            r[s] = 1.0;
                        }
                        continue;
                    }
                    let src = perm.map_or(t, |p| p[t]);
                    rows.push(
                        model
                            .trans_from(src)
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(t2, &p)| (idx(t2, l, k + 1), p))
                            .collect(),
                    );
                }
            }
        }
        trans.push(rows);
        reward.push(r);
    }
    let pomdp = PomdpModel {
        states,
        actions: action_names,
        observations,
        start,
        trans,
        obs: vec![obs_table; na],
        reward,
    };
    Ok(pomdp)
}

/// Belief over POMDP states.
type Belief = Vec<f64>;

fn step(pomdp: &PomdpModel, b: &Belief, a: usize) -> Belief {
    let mut next = vec![0.0; b.len()];
    for (s, &w) in b.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for &(s2, p) in &pomdp.trans[a][s] {
            next[s2] += w * p;
        }
    }
    next
}

/// Splits a predicted belief by observation: `(P(o), normalized posterior)`.
fn observe(pomdp: &PomdpModel, b: &Belief, a: usize) -> Vec<Option<(f64, Belief)>> {
    (0..pomdp.num_observations())
        .map(|o| {
            let post: Belief = b
                .iter()
                .enumerate()
                .map(|(s, &w)| w * pomdp.obs[a][s][o])
                .collect();
            let z: f64 = post.iter().sum();
            (z > 0.0).then(|| (z, post.into_iter().map(|v| v / z).collect()))
        })
        .collect()
}

fn expected_reward(pomdp: &PomdpModel, b: &Belief, a: usize) -> f64 {
    b.iter().zip(&pomdp.reward[a]).map(|(w, r)| w * r).sum()
}

/// Expected total reward of a lookup policy on the POMDP, with the decision
/// at step `n` taken as the reward-maximizing decision action.
///
/// `policy.actions()` must be the permutation actions of the POMDP, in order.
pub fn evaluate_policy_on_pomdp(pomdp: &PomdpModel, policy: &LookupPolicy, n: usize) -> Result<f64> {
    if policy.n() != n {
        return Err(Error::HorizonMismatch {
            policy: policy.n(),
            requested: n,
        });
    }
    let num_perms = policy.actions().len();
    if num_perms >= pomdp.num_actions() {
        return Err(Error::InvalidAction("POMDP has no decision actions".into()));
    }
    fn walk(
        pomdp: &PomdpModel,
        policy: &LookupPolicy,
        n: usize,
        num_perms: usize,
        b: &Belief,
        prefix: &mut Vec<usize>,
    ) -> Result<f64> {
        if prefix.len() == n {
            let rewards: Vec<f64> = (num_perms..pomdp.num_actions())
                .map(|a| expected_reward(pomdp, b, a))
                .collect();
            return Ok(rewards[argmax(&rewards)]);
        }
        let a = policy.action(prefix)?;
        let now = expected_reward(pomdp, b, a);
        let predicted = step(pomdp, b, a);
        let mut sum = CompensatedSum::new();
        sum.add(now);
        for (o, branch) in observe(pomdp, &predicted, a).into_iter().enumerate() {
            if let Some((w, post)) = branch {
                prefix.push(o);
                sum.add(w * walk(pomdp, policy, n, num_perms, &post, prefix)?);
                prefix.pop();
            }
        }
        Ok(sum.value())
    }
    let mut total = CompensatedSum::new();
    for (o, branch) in observe(pomdp, &pomdp.start, 0).into_iter().enumerate() {
        if let Some((w, post)) = branch {
            total.add(w * walk(pomdp, policy, n, num_perms, &post, &mut vec![o])?);
        }
    }
    Ok(total.value())
}

/// Optimal expected total reward over `n` actions by exhaustive search of
/// the belief tree (every action is allowed at every step).
pub fn pomdp_optimal_value(pomdp: &PomdpModel, n: usize, work_cap: f64) -> Result<f64> {
    check_tree_size("POMDP tree", pomdp.num_actions(), pomdp.num_observations(), n, work_cap)?;
    fn value(pomdp: &PomdpModel, b: &Belief, remaining: usize) -> f64 {
        if remaining == 0 {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for a in 0..pomdp.num_actions() {
            let mut sum = CompensatedSum::new();
            sum.add(expected_reward(pomdp, b, a));
            if remaining > 1 {
                let predicted = step(pomdp, b, a);
                for (w, post) in observe(pomdp, &predicted, a).into_iter().flatten() {
                    sum.add(w * value(pomdp, &post, remaining - 1));
                }
            }
            if sum.value() > best + TIE_TOLERANCE {
                best = sum.value();
            }
        }
        best
    }
    let branches: Vec<f64> = observe(pomdp, &pomdp.start, 0)
        .into_par_iter()
        .map(|br| br.map_or(0.0, |(w, post)| w * value(pomdp, &post, n)))
        .collect();
    Ok(branches.into_iter().collect::<CompensatedSum>().value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::three_state_model;
    use crate::hmm::Hmm;
    use crate::linalg::Matrix;
    use crate::policy::{solve_optimal, SolveOptions};
    use std::collections::BTreeMap;

    fn two_state(out: Matrix) -> ExpandedHmm {
        let trans = Matrix::from_rows(&[vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap();
        ExpandedHmm::trivial(Hmm::new(trans, out, vec![0.5, 0.5]).unwrap())
    }

    #[test]
    fn construction_arithmetic() {
        let m = two_state(Matrix::identity(2));
        let p = to_pomdp(&m, &ActionSet::identity_only(2), 1).unwrap();
        assert_eq!(p.num_states(), 4);
        assert_eq!(p.actions, vec!["identity", "decide_0", "decide_1"]);
        assert_eq!(p.states[1], "s1_l0_k1");
        p.validate().unwrap();
        let rewarded: usize = p.reward.iter().flatten().filter(|&&r| r > 0.0).count();
        assert_eq!(rewarded, 4);
    }

    #[test]
    fn distinguishable_and_indistinguishable_rewards() {
        let actions = ActionSet::identity_only(2);
        let empty = |n| LookupPolicy::new(n, actions.clone(), BTreeMap::new(), None).unwrap();
        let m = ExpandedHmm::trivial(
            Hmm::new(Matrix::identity(2), Matrix::identity(2), vec![0.5, 0.5]).unwrap(),
        );
        let p = to_pomdp(&m, &actions, 1).unwrap();
        assert!((evaluate_policy_on_pomdp(&p, &empty(1), 1).unwrap() - 1.0).abs() < 1e-15);
        let m = two_state(Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap());
        let p = to_pomdp(&m, &actions, 1).unwrap();
        assert!((evaluate_policy_on_pomdp(&p, &empty(1), 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn optimal_pomdp_value_matches_solver() {
        let m = ExpandedHmm::trivial(three_state_model(0.05, 0.1).unwrap());
        let actions = ActionSet::transpositions(3);
        let p = to_pomdp(&m, &actions, 2).unwrap();
        let sol = solve_optimal(&m, &actions, 2, &SolveOptions::default()).unwrap();
        let v = pomdp_optimal_value(&p, 2, 1e8).unwrap();
        assert!((v - sol.fidelity).abs() < 1e-10);
        let r = evaluate_policy_on_pomdp(&p, &sol.policy, 2).unwrap();
        assert!((r - sol.fidelity).abs() < 1e-10);
    }

    #[test]
    fn horizon_mismatch_reported() {
        let m = ExpandedHmm::trivial(three_state_model(0.05, 0.1).unwrap());
        let actions = ActionSet::transpositions(3);
        let p = to_pomdp(&m, &actions, 2).unwrap();
        let table = LookupPolicy::new(3, actions, BTreeMap::new(), None).unwrap();
        assert!(matches!(
            evaluate_policy_on_pomdp(&p, &table, 2),
            Err(Error::HorizonMismatch { .. })
        ));
    }
}
