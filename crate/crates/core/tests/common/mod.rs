//! Independent reference computations used by the integration tests.
//!
//! Nothing here calls the forward recursion or the belief updates of the
//! library; likelihoods are obtained by summing over every hidden path.

#![allow(dead_code)]

use adaptive_readout::hmm::{ExpandedHmm, Hmm};
use adaptive_readout::linalg::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random probability vector with occasional exact zeros.
pub fn random_distribution(rng: &mut ChaCha8Rng, len: usize, zero_prob: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len)
            .map(|_| if rng.gen::<f64>() < zero_prob { 0.0 } else { rng.gen::<f64>() + 1e-3 })
            .collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            return v.into_iter().map(|x| x / total).collect();
        }
    }
}

fn random_stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize, zero_prob: f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for c in 0..cols {
        for (r, v) in random_distribution(rng, rows, zero_prob).into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    m
}

/// A random HMM treated as trivially expanded.
pub fn random_trivial(rng: &mut ChaCha8Rng, states: usize, outputs: usize) -> ExpandedHmm {
    let trans = random_stochastic(rng, states, states, 0.2);
    let out = random_stochastic(rng, outputs, states, 0.2);
    let prior = random_distribution(rng, states, 0.0);
    ExpandedHmm::trivial(Hmm::new(trans, out, prior).unwrap())
}

/// A random outcome-expanded model over `physical * outputs` states.
pub fn random_expanded(rng: &mut ChaCha8Rng, physical: usize, outputs: usize) -> ExpandedHmm {
    let nt = physical * outputs;
    let mut trans = Matrix::zeros(nt, nt);
    for from in 0..physical {
        let col = random_distribution(rng, nt, 0.2);
        for o_prev in 0..outputs {
            for (t, &v) in col.iter().enumerate() {
                trans[(t, from * outputs + o_prev)] = v;
            }
        }
    }
    let mut out = Matrix::zeros(outputs, nt);
    let mut prior = vec![0.0; nt];
    let phys_prior = random_distribution(rng, physical, 0.0);
    for s in 0..physical {
        for o in 0..outputs {
            out[(o, s * outputs + o)] = 1.0;
        }
        prior[s * outputs] = phys_prior[s];
    }
    let alpha = (0..nt).map(|t| t / outputs).collect();
    let rho = (0..nt).map(|t| t % outputs).collect();
    let hmm = Hmm::new(trans, out, prior).unwrap();
    let labels = (0..physical).map(|s| s.to_string()).collect();
    ExpandedHmm::outcome_expanded(hmm, labels, alpha, rho).unwrap()
}

/// `P(y^n | s1)` for every `s1` in the support by summing over all hidden
/// paths. `perms[k]` is the lifted permutation applied after output `k + 1`.
pub fn path_sum(model: &ExpandedHmm, outputs: &[usize], perms: &[Vec<usize>]) -> Vec<f64> {
    let hmm = model.hmm();
    let nt = hmm.num_states();
    let a = hmm.trans();
    let b = hmm.out();
    fn rec(
        a: &Matrix,
        b: &Matrix,
        outputs: &[usize],
        perms: &[Vec<usize>],
        k: usize,
        t: usize,
        nt: usize,
    ) -> f64 {
        if k == outputs.len() {
            return 1.0;
        }
        let from = perms[k - 1][t];
        (0..nt)
            .map(|t2| a[(t2, from)] * b[(outputs[k], t2)] * rec(a, b, outputs, perms, k + 1, t2, nt))
            .sum()
    }
    model
        .support()
        .iter()
        .map(|&s1| {
            let mass: f64 = (0..nt)
                .filter(|&t| model.alpha()[t] == s1)
                .map(|t| hmm.prior()[t])
                .sum();
            (0..nt)
                .filter(|&t| model.alpha()[t] == s1)
                .map(|t| {
                    hmm.prior()[t] / mass
                        * b[(outputs[0], t)]
                        * rec(a, b, outputs, perms, 1, t, nt)
                })
                .sum()
        })
        .collect()
}

/// Every sequence in `0..base` of length `n`, in lexicographic order.
pub fn all_sequences(base: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..base).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// Infidelity by enumeration and path sums; `choose(prefix)` returns the
/// lifted permutation applied after `prefix`.
pub fn oracle_infidelity(
    model: &ExpandedHmm,
    n: usize,
    choose: &dyn Fn(&[usize]) -> Vec<usize>,
) -> f64 {
    let prior = model.physical_prior();
    let mut infidelity = 0.0;
    for seq in all_sequences(model.num_outputs(), n) {
        let perms: Vec<Vec<usize>> = (1..n).map(|k| choose(&seq[..k])).collect();
        let lik = path_sum(model, &seq, &perms);
        let joint: Vec<f64> = lik.iter().zip(prior).map(|(l, p)| l * p).collect();
        if joint.iter().all(|&j| j == 0.0) {
            continue;
        }
        let mut best = 0;
        for (i, &j) in joint.iter().enumerate() {
            if j > joint[best] {
                best = i;
            }
        }
        infidelity += joint.iter().enumerate().filter(|&(i, _)| i != best).map(|(_, j)| j).sum::<f64>();
    }
    infidelity
}

/// Identity map on `n` states.
pub fn identity(n: usize) -> Vec<usize> {
    (0..n).collect()
}

pub fn close_rel(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-300
}
