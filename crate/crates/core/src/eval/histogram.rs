use super::{EvalMethod, EvalReport};
use crate::error::{Error, Result};
use crate::hmm::ExpandedHmm;
use crate::linalg::argmax;

/// `P(total count = m | s1)` over `n` steps without permutations, where the
/// per-step count is the output index. Rows follow the initial support.
pub fn total_count_distribution(model: &ExpandedHmm, n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if model.binning().is_some() {
        return Err(Error::InvalidModel(
            "histogram method needs raw per-step counts, not bins".into(),
        ));
    }
    let nt = model.num_states();
    let ny = model.num_outputs();
    let max_total = n * (ny - 1);
    let width = max_total + 1;
    let mut out = Vec::with_capacity(model.support().len());
    for &s1 in model.support() {
        let mass: f64 = (0..nt)
            .filter(|&t| model.alpha()[t] == s1)
            .map(|t| model.prior()[t])
            .sum();
        if mass <= 0.0 {
            return Err(Error::ZeroPriorMass(s1));
        }
        // dist[t * width + m] = P(total m so far, current state t | s1)
        let mut dist = vec![0.0; nt * width];
        for t in (0..nt).filter(|&t| model.alpha()[t] == s1) {
            for y in 0..ny {
                dist[t * width + y] += model.prior()[t] / mass * model.emission(y, t);
            }
        }
        for _ in 1..n {
            let mut next = vec![0.0; nt * width];
            for t in 0..nt {
                let row = &dist[t * width..(t + 1) * width];
                if row.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for (t2, &a) in model.trans_from(t).iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for y in 0..ny {
                        let p = a * model.emission(y, t2);
                        if p == 0.0 {
                            continue;
                        }
                        let dst = &mut next[t2 * width + y..t2 * width + width];
                        for (d, &v) in dst.iter_mut().zip(&row[..width - y]) {
                            *d += v * p;
                        }
                    }
                }
            }
            dist = next;
        }
        let mut totals = vec![0.0; width];
        for t in 0..nt {
            for (m, v) in dist[t * width..(t + 1) * width].iter().enumerate() {
                totals[m] += v;
            }
        }
        out.push(totals);
    }
    Ok(out)
}

/// Infidelity of MAP inference from the total count over `n` steps with no
/// permutations, on a model whose outputs are raw photon counts.
pub fn histogram_infidelity(model: &ExpandedHmm, n: usize) -> Result<EvalReport> {
    let dist = total_count_distribution(model, n)?;
    let prior = model.physical_prior();
    let width = dist[0].len();
    let mut errors = vec![0.0; dist.len()];
    let mut sequences = 0;
    for m in 0..width {
        let weighted: Vec<f64> = dist.iter().zip(prior).map(|(d, p)| d[m] * p).collect();
        if weighted.iter().all(|&w| w == 0.0) {
            continue;
        }
        sequences += 1;
        let guess = argmax(&weighted);
        for (l, d) in dist.iter().enumerate() {
            if l != guess {
                errors[l] += d[m];
            }
        }
    }
    let mut report = EvalReport::from_errors(EvalMethod::Histogram, "histogram", model, n, errors);
    report.sequences = Some(sequences);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{bin_model, three_state_model, Partition, RateModel};
    use crate::eval::{exact_infidelity, EvalOptions};
    use crate::linalg::Matrix;
    use crate::policy::{ActionSet, Policy};

    fn two_level(rate: f64) -> ExpandedHmm {
        RateModel {
            rates: Matrix::from_rows(&[vec![-rate, 0.0], vec![rate, 0.0]]).unwrap(),
            emission_rates: vec![2000.0, 60000.0],
            dt_us: 40.0,
            n_max: 6,
            prior: vec![0.5, 0.5],
            quad_points: 8,
            state_labels: vec![],
            description: None,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn totals_are_distributions() {
        let m = two_level(500.0);
        for n in 1..5 {
            for row in total_count_distribution(&m, n).unwrap() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_step_matches_exact() {
        let m = ExpandedHmm::trivial(three_state_model(0.2, 0.3).unwrap());
        let h = histogram_infidelity(&m, 1).unwrap();
        let e = exact_infidelity(&m, &Policy::NoPerms, &ActionSet::identity_only(3), 1, &EvalOptions::default())
            .unwrap();
        assert!((h.infidelity - e.infidelity).abs() < 1e-15);
    }

    #[test]
    fn binned_model_rejected() {
        let m = two_level(500.0);
        let binned = bin_model(&m, &Partition::new(7, vec![1, 3]).unwrap()).unwrap();
        assert!(histogram_infidelity(&binned, 2).is_err());
    }
}
