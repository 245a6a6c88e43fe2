use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EvalMethod, EvalReport};
use crate::error::{Error, Result};
use crate::hmm::{forward_init, forward_step_permuted, map_estimate, ExpandedHmm};
use crate::policy::{ActionSet, BeliefState, DecisionContext, LiftedActions, LookaheadTree, Policy};

fn sample(weights: impl IntoIterator<Item = f64>, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.into_iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

struct Trial {
    row: usize,
    error: bool,
}

fn run_trial(
    model: &ExpandedHmm,
    policy: &Policy,
    lifted: &LiftedActions,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trial> {
    let mut t = sample(model.prior().iter().copied(), rng);
    let s1 = model.alpha()[t];
    let row = model
        .support()
        .iter()
        .position(|&s| s == s1)
        .expect("sampled state has prior mass");
    let emit = |t: usize, rng: &mut ChaCha8Rng| {
        sample((0..model.num_outputs()).map(|y| model.emission(y, t)), rng)
    };
    let mut y = emit(t, rng);
    let mut outputs = vec![y];
    let mut table = forward_init(model, y)?;
    let mut tree = match policy {
        Policy::MinEntropy { lookahead } => Some(LookaheadTree::build(
            BeliefState::from_table(&table, 1)?,
            (*lookahead).min(n - 1),
            model,
            lifted,
        )),
        _ => None,
    };
    for k in 1..n {
        let a = match &tree {
            Some(tree) => tree.best_action(),
            None => policy.decide(&DecisionContext {
                model,
                lifted,
                n,
                prefix: &outputs,
                belief: None,
            })?,
        };
        t = sample(model.trans_from(lifted.map(a)[t]).iter().copied(), rng);
        y = emit(t, rng);
        outputs.push(y);
        table = forward_step_permuted(model, &table, y, lifted.for_step(a))?;
        if let (Some(old), Policy::MinEntropy { lookahead }) = (tree.take(), policy) {
            let depth = (*lookahead).min(n - k - 1);
            tree = Some(match old.advance(a, y, depth, model, lifted) {
                Ok(next) => next,
                Err(Error::PrunedBranch { .. }) => {
                    LookaheadTree::build(BeliefState::from_table(&table, k + 1)?, depth, model, lifted)
                }
                Err(e) => return Err(e),
            });
        }
    }
    let est = map_estimate(&table)?;
    Ok(Trial {
        row,
        error: est.index != row,
    })
}

/// Monte Carlo estimate of the infidelity from `trials` sampled trajectories.
///
/// Trial `i` draws from a ChaCha8 stream seeded with `seed` and stream id
/// `i`, so the result is identical for a given seed whatever the thread count.
pub fn simulate(
    model: &ExpandedHmm,
    policy: &Policy,
    actions: &ActionSet,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<EvalReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    policy.check(n, actions)?;
    let lifted = actions.lift(model)?;
    let rows = model.support().len();
    let counts = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            run_trial(model, policy, &lifted, n, &mut rng)
        })
        .try_fold(
            || (vec![0u64; rows], vec![0u64; rows]),
            |(mut seen, mut wrong), trial| {
                let trial = trial?;
                seen[trial.row] += 1;
                wrong[trial.row] += trial.error as u64;
                Ok::<_, Error>((seen, wrong))
            },
        )
        .try_reduce(
            || (vec![0u64; rows], vec![0u64; rows]),
            |(mut s1, mut w1), (s2, w2)| {
                for l in 0..rows {
                    s1[l] += s2[l];
                    w1[l] += w2[l];
                }
                Ok((s1, w1))
            },
        )?;
    let (seen, wrong) = counts;
    let per_state: Vec<f64> = seen
        .iter()
        .zip(&wrong)
        .map(|(&s, &w)| if s == 0 { 0.0 } else { w as f64 / s as f64 })
        .collect();
    let total_wrong: u64 = wrong.iter().sum();
    let p = total_wrong as f64 / trials as f64;
    let mut report =
        EvalReport::from_errors(EvalMethod::MonteCarlo, policy.method_name(), model, n, per_state);
    report.infidelity = p;
    report.fidelity = 1.0 - p;
    report.trials = Some(trials);
    report.stderr = Some((p * (1.0 - p) / trials as f64).sqrt());
    report.seed = Some(seed);
    Ok(report)
}
