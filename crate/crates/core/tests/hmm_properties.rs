mod common;

use adaptive_readout::hmm::{forward, map_estimate, LikelihoodTable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(seed: u64) -> adaptive_readout::ExpandedHmm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.gen_bool(0.5) {
        let nt = rng.gen_range(2..=9);
        let ny = rng.gen_range(2..=3);
        common::random_trivial(&mut rng, nt, ny)
    } else {
        let ns = rng.gen_range(2..=3);
        let ny = rng.gen_range(2..=3);
        common::random_expanded(&mut rng, ns, ny)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn total_probability_is_one(seed in any::<u64>(), n in 1usize..=4) {
        let m = random_model(seed);
        let mut total = 0.0;
        for seq in common::all_sequences(m.num_outputs(), n) {
            if let Ok(t) = forward(&m, &seq, &[]) {
                total += t.likelihoods().iter().zip(m.physical_prior()).map(|(l, p)| l * p).sum::<f64>();
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-10, "total {}", total);
    }

    #[test]
    fn forward_matches_path_sums(seed in any::<u64>(), n in 1usize..=4) {
        let m = random_model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let np = m.num_physical();
        for seq in common::all_sequences(m.num_outputs(), n) {
            let perms: Vec<Vec<usize>> = (1..n)
                .map(|_| {
                    let mut p: Vec<usize> = (0..np).collect();
                    p.rotate_left(rng.gen_range(0..np));
                    m.lift(&adaptive_readout::Permutation::new(p, None).unwrap()).unwrap()
                })
                .collect();
            let oracle = common::path_sum(&m, &seq, &perms);
            let lifted: Vec<Option<Vec<usize>>> = perms.into_iter().map(Some).collect();
            match forward(&m, &seq, &lifted) {
                Ok(t) => {
                    for (f, o) in t.likelihoods().iter().zip(&oracle) {
                        prop_assert!(common::close_rel(*f, *o, 1e-12), "{} vs {}", f, o);
                    }
                }
                Err(_) => prop_assert!(oracle.iter().all(|&v| v == 0.0)),
            }
        }
    }

    #[test]
    fn map_is_scale_invariant(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 2..5),
        scale in 1e-200f64..1e200,
    ) {
        prop_assume!(rows.iter().flatten().any(|&v| v > 0.0));
        let k = rows.len();
        let support: Vec<usize> = (0..k).collect();
        let prior = vec![1.0 / k as f64; k];
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        let a = map_estimate(&LikelihoodTable::from_rows(support.clone(), prior.clone(), rows.clone()).unwrap()).unwrap();
        let b = map_estimate(&LikelihoodTable::from_rows(support, prior, scaled).unwrap()).unwrap();
        prop_assert_eq!(a.state, b.state);
        for (x, y) in a.posterior.iter().zip(&b.posterior) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_prior_map_is_maximum_likelihood(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 2..6),
    ) {
        prop_assume!(rows.iter().flatten().any(|&v| v > 0.0));
        let k = rows.len();
        let lik: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
        let table = LikelihoodTable::from_rows((0..k).collect(), vec![1.0 / k as f64; k], rows).unwrap();
        let est = map_estimate(&table).unwrap();
        let mut best = 0;
        for (i, &v) in lik.iter().enumerate() {
            if v > lik[best] {
                best = i;
            }
        }
        prop_assert!(lik[est.index] >= lik[best] * (1.0 - 1e-15));
    }
}

#[test]
fn long_sequences_do_not_underflow() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = common::random_trivial(&mut rng, 4, 3);
    let mut seq = Vec::new();
    let mut t = 0;
    for _ in 0..2000 {
        let col = m.hmm().out().column(t);
        let y = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
        seq.push(y);
        let next = m.trans_from(t);
        t = (0..next.len()).max_by(|&a, &b| next[a].total_cmp(&next[b])).unwrap();
    }
    let table = forward(&m, &seq, &[]).unwrap();
    let ll = table.log_likelihoods();
    assert!(ll.iter().any(|v| v.is_finite() && *v < -700.0));
    assert!(map_estimate(&table).is_ok());
}
