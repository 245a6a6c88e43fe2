use crate::error::{Error, Result};
use crate::hmm::Hmm;
use crate::linalg::Matrix;

/// The symmetric three-state toy model.
///
/// State 1 is short-lived and decays to 0 or 2 with equal probability; states
/// 0 and 2 return to 1 with probability `a` and never reach each other.
/// Output 0 excludes state 2, output 2 excludes state 0, and output 1 (emitted
/// with probability `b` by every state) carries no information. The prior is
/// uniform. The model is invariant under relabeling 0 <-> 2 in both states and
/// outputs.
pub fn three_state_model(a: f64, b: f64) -> Result<Hmm> {
    for (name, v) in [("a", a), ("b", b)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} = {v} is outside [0, 1]")));
        }
    }
    let trans = Matrix::from_rows(&[
        vec![1.0 - a, (1.0 - a) / 2.0, 0.0],
        vec![a, a, a],
        vec![0.0, (1.0 - a) / 2.0, 1.0 - a],
    ])?;
    let out = Matrix::from_rows(&[
        vec![1.0 - b, (1.0 - b) / 2.0, 0.0],
        vec![b, b, b],
        vec![0.0, (1.0 - b) / 2.0, 1.0 - b],
    ])?;
    Hmm::new(trans, out, vec![1.0 / 3.0; 3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_parameters_give_absorbing_ends() {
        let m = three_state_model(0.0, 0.0).unwrap();
        assert_eq!(m.trans().column(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(m.trans().column(1), vec![0.5, 0.0, 0.5]);
        assert_eq!(m.out().column(1), vec![0.5, 0.0, 0.5]);
        assert_eq!(m.out().column(2), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn out_of_range_parameters_rejected() {
        assert!(three_state_model(-0.1, 0.2).is_err());
        assert!(three_state_model(0.1, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn columns_are_stochastic(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let m = three_state_model(a, b).unwrap();
            for s in m.trans().column_sums().into_iter().chain(m.out().column_sums()) {
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn relabeling_zero_and_two_is_a_symmetry(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let m = three_state_model(a, b).unwrap();
            let swap = |i: usize| 2 - i;
            for r in 0..3 {
                for c in 0..3 {
                    prop_assert_eq!(m.trans()[(swap(r), swap(c))], m.trans()[(r, c)]);
                    prop_assert_eq!(m.out()[(swap(r), swap(c))], m.out()[(r, c)]);
                }
            }
        }
    }
}
