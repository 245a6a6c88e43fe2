//! Permutation actions, belief states and the policies that choose actions.

mod actions;
mod belief;
mod entropy;
mod lookup;
mod optimal;

pub use actions::{ActionSet, LiftedActions, Permutation};
pub use belief::{
    bayes_update, branch_weight, leaf_value, observe_all, posterior_entropy, transition_update,
    transition_update_lifted, BeliefState, Phase,
};
pub use entropy::{min_entropy_action, LookaheadTree, DEFAULT_LOOKAHEAD_CAP};
pub use lookup::LookupPolicy;
pub use optimal::{
    check_tree_size, solve_optimal, Solution, SolveOptions, DEFAULT_SOLVE_CAP, TIE_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::ExpandedHmm;

/// A rule choosing the action applied after each of the outputs `1..n-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    /// Always the identity.
    NoPerms,
    /// A fixed action sequence; `actions[k - 1]` follows output `k`.
    Static { actions: Vec<usize> },
    /// A precomputed table keyed by output prefix.
    Lookup(LookupPolicy),
    /// Receding-horizon minimization of the expected posterior entropy
    /// `lookahead` steps ahead (truncated at the horizon).
    MinEntropy { lookahead: usize },
}

/// What a policy may look at when choosing the action after output `k`.
pub struct DecisionContext<'a> {
    pub model: &'a ExpandedHmm,
    pub lifted: &'a LiftedActions,
    /// Horizon.
    pub n: usize,
    /// Outputs `y1..yk`.
    pub prefix: &'a [usize],
    /// `beta_k`; required only when [`Policy::needs_belief`] is true.
    pub belief: Option<&'a BeliefState>,
}

impl Policy {
    /// Display name matching the method names used in sweeps.
    pub fn method_name(&self) -> &'static str {
        match self {
            Policy::NoPerms => "no-perms",
            Policy::Static { .. } => "static",
            Policy::Lookup(_) => "lookup",
            Policy::MinEntropy { .. } => "min-entropy",
        }
    }

    pub fn needs_belief(&self) -> bool {
        matches!(self, Policy::MinEntropy { .. })
    }

    /// Checks that the policy can run for horizon `n` with `actions`.
    pub fn check(&self, n: usize, actions: &ActionSet) -> Result<()> {
        if actions.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        match self {
            Policy::NoPerms => Ok(()),
            Policy::Static { actions: seq } => {
                if seq.len() + 1 < n {
                    return Err(Error::InvalidParameter(format!(
                        "static sequence has {} actions, horizon {n} needs {}",
                        seq.len(),
                        n - 1
                    )));
                }
                match seq.iter().find(|&&a| a >= actions.len()) {
                    Some(&a) => Err(Error::out_of_range("action", a, actions.len())),
                    None => Ok(()),
                }
            }
            Policy::Lookup(table) => {
                if table.n() != n {
                    return Err(Error::HorizonMismatch {
                        policy: table.n(),
                        requested: n,
                    });
                }
                let same = table.actions().len() == actions.len()
                    && table
                        .actions()
                        .actions()
                        .iter()
                        .zip(actions.actions())
                        .all(|(a, b)| a.as_slice() == b.as_slice());
                if !same {
                    return Err(Error::InvalidAction(
                        "lookup table was built for a different action set".into(),
                    ));
                }
                Ok(())
            }
            Policy::MinEntropy { lookahead } => {
                if *lookahead == 0 {
                    return Err(Error::InvalidParameter("look-ahead must be at least 1".into()));
                }
                Ok(())
            }
        }
    }

    /// Index of the action to apply after output `k = ctx.prefix.len()`.
    pub fn decide(&self, ctx: &DecisionContext<'_>) -> Result<usize> {
        let k = ctx.prefix.len();
        match self {
            Policy::NoPerms => Ok(0),
            Policy::Static { actions } => actions
                .get(k - 1)
                .copied()
                .ok_or_else(|| Error::out_of_range("static step", k - 1, actions.len())),
            Policy::Lookup(table) => table.action(ctx.prefix),
            Policy::MinEntropy { lookahead } => {
                let belief = ctx.belief.ok_or_else(|| {
                    Error::InvalidParameter("min-entropy policy needs the current belief".into())
                })?;
                let depth = (*lookahead).min(ctx.n - k);
                check_tree_size(
                    "look-ahead tree",
                    ctx.lifted.len(),
                    ctx.model.num_outputs(),
                    depth,
                    DEFAULT_LOOKAHEAD_CAP,
                )?;
                Ok(LookaheadTree::build(belief.clone(), depth, ctx.model, ctx.lifted).best_action())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn policy_json_is_tagged() {
        let p = Policy::MinEntropy { lookahead: 2 };
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"kind":"min-entropy","lookahead":2}"#);
        let back: Policy = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let lookup = Policy::Lookup(
            LookupPolicy::new(2, ActionSet::transpositions(3), BTreeMap::new(), None).unwrap(),
        );
        let text = serde_json::to_string(&lookup).unwrap();
        assert_eq!(serde_json::from_str::<Policy>(&text).unwrap(), lookup);
    }

    #[test]
    fn check_catches_mismatches() {
        let actions = ActionSet::transpositions(3);
        assert!(Policy::Static { actions: vec![1] }.check(3, &actions).is_err());
        assert!(Policy::Static { actions: vec![1, 9] }.check(3, &actions).is_err());
        assert!(Policy::Static { actions: vec![1, 2] }.check(3, &actions).is_ok());
        assert!(Policy::MinEntropy { lookahead: 0 }.check(3, &actions).is_err());
        let table = LookupPolicy::new(2, actions.clone(), BTreeMap::new(), None).unwrap();
        assert!(matches!(
            Policy::Lookup(table.clone()).check(3, &actions),
            Err(Error::HorizonMismatch { policy: 2, requested: 3 })
        ));
        assert!(Policy::Lookup(table).check(2, &ActionSet::identity_only(3)).is_err());
    }
}
