use rayon::prelude::*;

use super::{EvalMethod, EvalReport};
use crate::error::{Error, Result};
use crate::hmm::{forward_init, forward_step_permuted, map_estimate, ExpandedHmm, LikelihoodTable};
use crate::linalg::CompensatedSum;
use crate::policy::{ActionSet, BeliefState, DecisionContext, LiftedActions, Policy};

/// Default budget on `|Y|^n` for exact enumeration.
pub const DEFAULT_EVAL_CAP: f64 = 1e7;

/// Depth at which the enumeration is split into independent tasks.
const SPLIT_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub work_cap: f64,
    pub parallel: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            work_cap: DEFAULT_EVAL_CAP,
            parallel: true,
        }
    }
}

struct Enumerator<'a> {
    model: &'a ExpandedHmm,
    policy: &'a Policy,
    lifted: LiftedActions,
    n: usize,
}

#[derive(Default)]
struct Tally {
    errors: Vec<CompensatedSum>,
    sequences: u64,
}

impl Tally {
    fn new(rows: usize) -> Self {
        Tally {
            errors: vec![CompensatedSum::new(); rows],
            sequences: 0,
        }
    }

    fn merge(&mut self, other: &Tally) {
        for (a, b) in self.errors.iter_mut().zip(&other.errors) {
            a.merge(b);
        }
        self.sequences += other.sequences;
    }
}

fn possible(table: &LikelihoodTable) -> bool {
    (0..table.support().len()).any(|l| table.row(l).iter().any(|&v| v > 0.0))
}

impl Enumerator<'_> {
    fn action(&self, table: &LikelihoodTable, prefix: &[usize]) -> Result<usize> {
        let belief = if self.policy.needs_belief() {
            Some(BeliefState::from_table(table, prefix.len())?)
        } else {
            None
        };
        self.policy.decide(&DecisionContext {
            model: self.model,
            lifted: &self.lifted,
            n: self.n,
            prefix,
            belief: belief.as_ref(),
        })
    }

    /// Reachable children of a node at depth `prefix.len() < n`.
    fn children(&self, table: &LikelihoodTable, prefix: &[usize]) -> Result<Vec<(usize, LikelihoodTable)>> {
        let a = self.action(table, prefix)?;
        let step = self.lifted.for_step(a);
        let mut out = Vec::new();
        for y in 0..self.model.num_outputs() {
            let next = forward_step_permuted(self.model, table, y, step)?;
            if possible(&next) {
                out.push((y, next));
            }
        }
        Ok(out)
    }

    fn leaf(&self, table: &LikelihoodTable, tally: &mut Tally) -> Result<()> {
        let est = map_estimate(table)?;
        let lik = table.likelihoods();
        for (l, p) in lik.into_iter().enumerate() {
            if l != est.index {
                tally.errors[l].add(p);
            }
        }
        tally.sequences += 1;
        Ok(())
    }

    fn walk(&self, table: &LikelihoodTable, prefix: &mut Vec<usize>, tally: &mut Tally) -> Result<()> {
        if prefix.len() == self.n {
            return self.leaf(table, tally);
        }
        for (y, next) in self.children(table, prefix)? {
            prefix.push(y);
            self.walk(&next, prefix, tally)?;
            prefix.pop();
        }
        Ok(())
    }

    /// All reachable nodes at depth `min(n, SPLIT_DEPTH)`, in sequence order.
    fn frontier(&self) -> Result<Vec<(Vec<usize>, LikelihoodTable)>> {
        let mut level = Vec::new();
        for y1 in 0..self.model.num_outputs() {
            let t = forward_init(self.model, y1)?;
            if possible(&t) {
                level.push((vec![y1], t));
            }
        }
        for _ in 1..self.n.min(SPLIT_DEPTH) {
            let mut next_level = Vec::new();
            for (prefix, table) in &level {
                for (y, next) in self.children(table, prefix)? {
                    let mut p = prefix.clone();
                    p.push(y);
                    next_level.push((p, next));
                }
            }
            level = next_level;
        }
        Ok(level)
    }
}

/// Exact infidelity of `policy` at horizon `n` by enumerating every output
/// sequence with nonzero probability.
///
/// Adaptive policies are queried with exactly the prefix (and belief) they
/// would see online. Sums are compensated and merged in sequence order, so
/// the result does not depend on the thread schedule.
pub fn exact_infidelity(
    model: &ExpandedHmm,
    policy: &Policy,
    actions: &ActionSet,
    n: usize,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    policy.check(n, actions)?;
    let needed = (model.num_outputs() as f64).powi(n as i32);
    if needed > opts.work_cap {
        return Err(Error::work_cap("exact enumeration", needed, opts.work_cap));
    }
    let e = Enumerator {
        model,
        policy,
        lifted: actions.lift(model)?,
        n,
    };
    let rows = model.support().len();
    let task = |(prefix, table): (Vec<usize>, LikelihoodTable)| -> Result<Tally> {
        let mut tally = Tally::new(rows);
        let mut prefix = prefix;
        e.walk(&table, &mut prefix, &mut tally)?;
        Ok(tally)
    };
    let frontier = e.frontier()?;
    let parts: Vec<Tally> = if opts.parallel {
        frontier.into_par_iter().map(task).collect::<Result<_>>()?
    } else {
        frontier.into_iter().map(task).collect::<Result<_>>()?
    };
    let mut total = Tally::new(rows);
    for p in &parts {
        total.merge(p);
    }
    let errors: Vec<f64> = total.errors.iter().map(CompensatedSum::value).collect();
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numeric("non-finite error probability".into()));
    }
    let mut report = EvalReport::from_errors(EvalMethod::Exact, policy.method_name(), model, n, errors);
    report.sequences = Some(total.sequences);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::three_state_model;
    use crate::hmm::Hmm;
    use crate::linalg::Matrix;

    fn two_state(out: Matrix) -> ExpandedHmm {
        let trans = Matrix::from_rows(&[vec![0.8, 0.3], vec![0.2, 0.7]]).unwrap();
        ExpandedHmm::trivial(Hmm::new(trans, out, vec![0.5, 0.5]).unwrap())
    }

    #[test]
    fn indistinguishable_states_give_one_half() {
        let m = two_state(Matrix::from_rows(&[vec![0.3, 0.3], vec![0.7, 0.7]]).unwrap());
        for n in 1..5 {
            let r = exact_infidelity(&m, &Policy::NoPerms, &ActionSet::identity_only(2), n, &EvalOptions::default())
                .unwrap();
            assert!((r.infidelity - 0.5).abs() < 1e-12);
            assert_eq!(r.fidelity + r.infidelity, 1.0);
        }
    }

    #[test]
    fn distinguishable_states_at_one_step() {
        let m = two_state(Matrix::identity(2));
        let r = exact_infidelity(&m, &Policy::NoPerms, &ActionSet::identity_only(2), 1, &EvalOptions::default())
            .unwrap();
        assert_eq!(r.infidelity, 0.0);
        assert_eq!(r.sequences, Some(2));
    }

    #[test]
    fn serial_and_parallel_are_bit_identical() {
        let m = ExpandedHmm::trivial(three_state_model(0.08, 0.15).unwrap());
        let actions = ActionSet::transpositions(3);
        let policy = Policy::MinEntropy { lookahead: 2 };
        let par = exact_infidelity(&m, &policy, &actions, 5, &EvalOptions::default()).unwrap();
        let ser = exact_infidelity(
            &m,
            &policy,
            &actions,
            5,
            &EvalOptions {
                parallel: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(par, ser);
    }

    #[test]
    fn work_cap_is_enforced() {
        let m = ExpandedHmm::trivial(three_state_model(0.1, 0.1).unwrap());
        let opts = EvalOptions {
            work_cap: 10.0,
            parallel: true,
        };
        assert!(matches!(
            exact_infidelity(&m, &Policy::NoPerms, &ActionSet::identity_only(3), 3, &opts),
            Err(Error::WorkCapExceeded { .. })
        ));
    }
}
