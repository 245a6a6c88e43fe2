mod common;

use adaptive_readout::builders::{
    bin_model, matrix_exp, photon_distribution, step_kernel, three_state_model, Partition,
    RateModel,
};
use adaptive_readout::eval::{exact_infidelity, EvalOptions};
use adaptive_readout::linalg::Matrix;
use adaptive_readout::{ActionSet, Policy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn random_rates(seed: u64, levels: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Matrix::zeros(levels, levels);
    for from in 0..levels {
        let d = common::random_distribution(&mut rng, levels, 0.4);
        let mut out = 0.0;
        for to in 0..levels {
            if to != from {
                q[(to, from)] = d[to] * 5000.0;
                out += q[(to, from)];
            }
        }
        q[(from, from)] = -out;
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn three_state_is_symmetric_under_relabeling(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let m = three_state_model(a, b).unwrap();
        let swap = |i: usize| 2 - i;
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(m.trans()[(i, j)], m.trans()[(swap(i), swap(j))]);
                prop_assert_eq!(m.out()[(i, j)], m.out()[(swap(i), swap(j))]);
            }
        }
        for s in 0..3 {
            prop_assert!((m.trans().column(s).iter().sum::<f64>() - 1.0).abs() < 1e-15);
            prop_assert!((m.out().column(s).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matrix_exp_is_stochastic(seed in any::<u64>(), levels in 1usize..=8, dt_us in 0.01f64..500.0) {
        let r = matrix_exp(&random_rates(seed, levels), dt_us * 1e-6).unwrap();
        for c in 0..levels {
            prop_assert!((r.column(c).iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(r.column(c).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn two_level_closed_form(rate in 1.0f64..1e5, dt_us in 0.01f64..100.0) {
        let q = Matrix::from_rows(&[vec![-rate, rate], vec![rate, -rate]]).unwrap();
        let dt = dt_us * 1e-6;
        let r = matrix_exp(&q, dt).unwrap();
        let stay = (1.0 + (-2.0 * rate * dt).exp()) / 2.0;
        prop_assert!((r[(0, 0)] - stay).abs() < 1e-12);
        prop_assert!((r[(1, 0)] - (1.0 - stay)).abs() < 1e-12);
    }

    #[test]
    fn photon_distribution_sums_to_one(
        e_from in 0.0f64..2e5,
        e_to in 0.0f64..2e5,
        dt_us in 0.1f64..100.0,
        n_max in 1usize..=20,
    ) {
        let j = photon_distribution(e_from, e_to, dt_us * 1e-6, n_max, 32).unwrap();
        prop_assert_eq!(j.len(), n_max + 1);
        prop_assert!((j.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(j.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn step_kernel_marginal_is_the_exponential(seed in any::<u64>(), levels in 2usize..=4, dt_us in 1.0f64..80.0) {
        let rm = RateModel {
            rates: random_rates(seed, levels),
            emission_rates: (0..levels).map(|s| 1000.0 + 30000.0 * s as f64).collect(),
            dt_us,
            n_max: 6,
            prior: vec![1.0 / levels as f64; levels],
            quad_points: 8,
            state_labels: vec![],
            description: None,
        };
        let kernel = step_kernel(&rm, 8).unwrap();
        let exp = matrix_exp(&rm.rates, rm.dt()).unwrap();
        prop_assert!(kernel.marginal().max_abs_diff(&exp) < 1e-9);
    }

    #[test]
    fn enumeration_count_is_binomial(outputs in 1usize..=16, bins in 1usize..=5) {
        prop_assume!(bins <= outputs);
        let all = Partition::enumerate(outputs, bins).unwrap();
        prop_assert_eq!(all.len(), binomial(outputs - 1, bins - 1));
        for p in &all {
            let covered: usize = p.bins().iter().map(|r| r.len()).sum();
            prop_assert_eq!(covered, outputs);
            prop_assert!(p.bins().iter().all(|r| !r.is_empty()));
        }
    }

    #[test]
    fn binning_preserves_stochasticity(seed in any::<u64>(), bins in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_expanded(&mut rng, 2, 4);
        for p in Partition::enumerate(4, bins).unwrap() {
            let b = bin_model(&m, &p).unwrap();
            prop_assert_eq!(b.num_states(), 2 * bins);
            for t in 0..b.num_states() {
                prop_assert!((b.trans_from(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            prop_assert!((b.prior().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refining_a_partition_never_hurts(seed in any::<u64>(), n in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_expanded(&mut rng, 2, 5);
        let actions = ActionSet::transpositions(2);
        let score = |p: &Partition| {
            exact_infidelity(&bin_model(&m, p).unwrap(), &Policy::NoPerms, &actions, n, &EvalOptions::default())
                .unwrap()
                .infidelity
        };
        let fine = Partition::enumerate(5, 3).unwrap();
        let coarse = Partition::enumerate(5, 2).unwrap();
        for f in &fine {
            for c in coarse.iter().filter(|c| f.refines(c)) {
                prop_assert!(score(f) <= score(c) + 1e-12);
            }
        }
        let unbinned = exact_infidelity(&m, &Policy::NoPerms, &actions, n, &EvalOptions::default()).unwrap().infidelity;
        prop_assert!((score(&Partition::singletons(5)) - unbinned).abs() < 1e-12);
        prop_assert!(fine.iter().all(|f| score(f) >= unbinned - 1e-12));
    }
}

#[test]
fn single_bin_carries_no_information() {
    let rm = RateModel {
        rates: Matrix::from_rows(&[vec![-100.0, 300.0], vec![100.0, -300.0]]).unwrap(),
        emission_rates: vec![500.0, 50000.0],
        dt_us: 40.0,
        n_max: 4,
        prior: vec![0.5, 0.5],
        quad_points: 16,
        state_labels: vec![],
        description: None,
    };
    let m = bin_model(&rm.build().unwrap(), &Partition::single(5)).unwrap();
    let r = exact_infidelity(&m, &Policy::NoPerms, &ActionSet::transpositions(2), 4, &EvalOptions::default()).unwrap();
    assert!((r.infidelity - 0.5).abs() < 1e-12);
}
