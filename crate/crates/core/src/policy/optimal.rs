use std::collections::BTreeMap;

use rayon::prelude::*;

use super::belief::{leaf_value, observe_all, transition_update_lifted, BeliefState};
use super::{ActionSet, LiftedActions, LookupPolicy};
use crate::error::{Error, Result};
use crate::hmm::ExpandedHmm;
use crate::linalg::CompensatedSum;

/// An action must beat the incumbent by more than this to replace it.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Default budget on `(|A| |Y|)^n` for the exhaustive solver.
pub const DEFAULT_SOLVE_CAP: f64 = 1e8;

/// Tree levels below the root that are split across worker threads.
const PARALLEL_LEVELS: usize = 2;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub work_cap: f64,
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            work_cap: DEFAULT_SOLVE_CAP,
            parallel: true,
        }
    }
}

/// Result of [`solve_optimal`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub policy: LookupPolicy,
    /// Optimal fidelity (the Bellman value).
    pub fidelity: f64,
}

struct PlanNode {
    action: usize,
    next: Vec<Option<PlanNode>>,
}

struct Solver<'a> {
    model: &'a ExpandedHmm,
    lifted: LiftedActions,
    n: usize,
    parallel: bool,
}

impl Solver<'_> {
    /// Optimal value of a post-observation belief at step `k`.
    fn value(&self, beta: &BeliefState, k: usize) -> (f64, Option<PlanNode>) {
        if k >= self.n {
            return (leaf_value(beta), None);
        }
        let par = self.parallel && k <= PARALLEL_LEVELS;
        let evaluate = |a: usize| self.action_value(beta, a, k, par);
        let candidates: Vec<(f64, Vec<Option<PlanNode>>)> = if par {
            (0..self.lifted.len()).into_par_iter().map(evaluate).collect()
        } else {
            (0..self.lifted.len()).map(evaluate).collect()
        };
        let mut best: Option<(usize, f64, Vec<Option<PlanNode>>)> = None;
        for (a, (v, next)) in candidates.into_iter().enumerate() {
            if best.as_ref().map_or(true, |(_, bv, _)| v > bv + TIE_TOLERANCE) {
                best = Some((a, v, next));
            }
        }
        let (action, v, next) = best.expect("action set is nonempty");
        (v, Some(PlanNode { action, next }))
    }

    fn action_value(
        &self,
        beta: &BeliefState,
        a: usize,
        k: usize,
        par: bool,
    ) -> (f64, Vec<Option<PlanNode>>) {
        let eta = transition_update_lifted(beta, self.lifted.for_step(a), self.model)
            .expect("belief phase is consistent");
        self.expectation(&eta, k + 1, par)
    }

    /// Expected optimal value over the next output, which becomes output `k`.
    fn expectation(&self, eta: &BeliefState, k: usize, par: bool) -> (f64, Vec<Option<PlanNode>>) {
        let branches = observe_all(eta, self.model);
        let solve = |b: Option<(f64, BeliefState)>| {
            b.map(|(w, beta)| {
                let (v, plan) = self.value(&beta, k);
                (w * v, plan)
            })
        };
        let results: Vec<Option<(f64, Option<PlanNode>)>> = if par {
            branches.into_par_iter().map(solve).collect()
        } else {
            branches.into_iter().map(solve).collect()
        };
        let mut sum = CompensatedSum::new();
        let mut next = Vec::with_capacity(results.len());
        for r in results {
            match r {
                Some((v, plan)) => {
                    sum.add(v);
                    next.push(plan);
                }
                None => next.push(None),
            }
        }
        (sum.value(), next)
    }
}

fn flatten(node: &PlanNode, prefix: &mut Vec<usize>, table: &mut BTreeMap<Vec<usize>, usize>) {
    table.insert(prefix.clone(), node.action);
    for (y, child) in node.next.iter().enumerate() {
        if let Some(child) = child {
            prefix.push(y);
            flatten(child, prefix, table);
            prefix.pop();
        }
    }
}

/// Checks `(|A| |Y|)^n` against the budget.
pub fn check_tree_size(what: &str, actions: usize, outputs: usize, depth: usize, cap: f64) -> Result<()> {
    let needed = ((actions * outputs) as f64).powi(depth as i32);
    if needed > cap {
        return Err(Error::work_cap(what, needed, cap));
    }
    Ok(())
}

/// Exhaustively solves the Bellman recursion over the observation/action
/// tree and returns the optimal lookup table with its fidelity.
///
/// Action ties resolve to the lowest index, so with only the identity
/// available the result is the no-permutation fidelity.
pub fn solve_optimal(
    model: &ExpandedHmm,
    actions: &ActionSet,
    n: usize,
    opts: &SolveOptions,
) -> Result<Solution> {
    if actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if n == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    check_tree_size("exhaustive solver", actions.len(), model.num_outputs(), n, opts.work_cap)?;
    let solver = Solver {
        model,
        lifted: actions.lift(model)?,
        n,
        parallel: opts.parallel,
    };
    let (fidelity, plans) = solver.expectation(&BeliefState::prior(model), 1, opts.parallel);
    let mut table = BTreeMap::new();
    for (y1, plan) in plans.iter().enumerate() {
        if let Some(plan) = plan {
            flatten(plan, &mut vec![y1], &mut table);
        }
    }
    if !fidelity.is_finite() {
        return Err(Error::Numeric(format!("optimal value is {fidelity}")));
    }
    let policy = LookupPolicy::new(n, actions.clone(), table, Some(fidelity))?;
    Ok(Solution { policy, fidelity })
}
