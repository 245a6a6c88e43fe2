//! Consecutive-integer binning of the output space.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{exact_infidelity, EvalOptions};
use crate::hmm::{ExpandedHmm, Hmm};
use crate::linalg::Matrix;
use crate::policy::{ActionSet, Policy};

const OUTCOME_INDEPENDENCE_TOL: f64 = 1e-12;

/// A partition of `0..num_outputs` into runs of consecutive outputs.
///
/// `boundaries` holds the first output of every bin except the first, so
/// `[1, 2, 3]` over 16 outputs is `{0}, {1}, {2}, {3..=15}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRecord")]
pub struct Partition {
    num_outputs: usize,
    boundaries: Vec<usize>,
}

#[derive(Deserialize)]
struct PartitionRecord {
    num_outputs: usize,
    boundaries: Vec<usize>,
}

impl TryFrom<PartitionRecord> for Partition {
    type Error = Error;

    fn try_from(r: PartitionRecord) -> Result<Self> {
        Partition::new(r.num_outputs, r.boundaries)
    }
}

impl Partition {
    pub fn new(num_outputs: usize, boundaries: Vec<usize>) -> Result<Self> {
        if num_outputs == 0 {
            return Err(Error::InvalidPartition("empty output space".into()));
        }
        let mut prev = 0;
        for &b in &boundaries {
            if b <= prev || b >= num_outputs {
                return Err(Error::InvalidPartition(format!(
                    "boundaries {boundaries:?} must be strictly increasing within 1..{num_outputs}"
                )));
            }
            prev = b;
        }
        Ok(Partition {
            num_outputs,
            boundaries,
        })
    }

    /// Every output in its own bin.
    pub fn singletons(num_outputs: usize) -> Self {
        Partition {
            num_outputs,
            boundaries: (1..num_outputs).collect(),
        }
    }

    /// All outputs in one bin.
    pub fn single(num_outputs: usize) -> Self {
        Partition {
            num_outputs,
            boundaries: Vec::new(),
        }
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn num_bins(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn bins(&self) -> Vec<Range<usize>> {
        let mut starts = vec![0];
        starts.extend_from_slice(&self.boundaries);
        let mut ends = self.boundaries.clone();
        ends.push(self.num_outputs);
        starts.into_iter().zip(ends).map(|(a, b)| a..b).collect()
    }

    pub fn bin_of(&self, y: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= y)
    }

    pub fn is_singletons(&self) -> bool {
        self.num_bins() == self.num_outputs
    }

    /// Whether every bin of `self` lies inside a bin of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.num_outputs == coarser.num_outputs
            && coarser.boundaries.iter().all(|b| self.boundaries.contains(b))
    }

    /// All partitions with `num_bins` consecutive bins, in lexicographic order
    /// of their boundary lists.
    pub fn enumerate(num_outputs: usize, num_bins: usize) -> Result<Vec<Partition>> {
        if num_bins == 0 || num_bins > num_outputs {
            return Err(Error::InvalidPartition(format!(
                "cannot split {num_outputs} outputs into {num_bins} bins"
            )));
        }
        let k = num_bins - 1;
        let mut out = Vec::new();
        let mut cut: Vec<usize> = (1..=k).collect();
        loop {
            out.push(Partition {
                num_outputs,
                boundaries: cut.clone(),
            });
            // Advance to the next k-combination of 1..num_outputs.
            let mut i = k;
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                if cut[i] < num_outputs - k + i {
                    cut[i] += 1;
                    for j in i + 1..k {
                        cut[j] = cut[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn label(&self, bin: Range<usize>, labels: &[String]) -> String {
        if bin.len() == 1 {
            labels[bin.start].clone()
        } else {
            format!("{}..{}", labels[bin.start], labels[bin.end - 1])
        }
    }
}

/// The model that only reports which bin each output falls in.
///
/// For outcome-expanded models the expanded state space becomes
/// `|S| * num_bins`; for trivially expanded models the output matrix rows are
/// merged.
pub fn bin_model(model: &ExpandedHmm, partition: &Partition) -> Result<ExpandedHmm> {
    if partition.num_outputs() != model.num_outputs() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} outputs, model has {}",
            partition.num_outputs(),
            model.num_outputs()
        )));
    }
    let bins = partition.bins();
    let out_labels: Vec<String> = bins
        .iter()
        .map(|b| partition.label(b.clone(), model.hmm().output_labels()))
        .collect();
    let binned = match model.rho() {
        None => {
            let hmm = model.hmm();
            let mut out = Matrix::zeros(bins.len(), hmm.num_states());
            for (i, b) in bins.iter().enumerate() {
                for y in b.clone() {
                    for t in 0..hmm.num_states() {
                        out[(i, t)] += hmm.out()[(y, t)];
                    }
                }
            }
            let hmm = Hmm::with_labels(
                hmm.trans().clone(),
                out,
                hmm.prior().to_vec(),
                hmm.state_labels().to_vec(),
                out_labels,
            )?;
            ExpandedHmm::trivial(hmm)
        }
        Some(_) => bin_outcome_expanded(model, &bins, out_labels)?,
    };
    Ok(if partition.is_singletons() {
        binned
    } else {
        binned.with_binning(partition.clone())
    })
}

fn bin_outcome_expanded(
    model: &ExpandedHmm,
    bins: &[Range<usize>],
    out_labels: Vec<String>,
) -> Result<ExpandedHmm> {
    let ns = model.num_physical();
    let ny = model.num_outputs();
    let nb = bins.len();
    let idx = |s: usize, o: usize| model.state_index(s, o).expect("complete expansion");
    let index: Vec<Vec<usize>> = (0..ns).map(|s| (0..ny).map(|o| idx(s, o)).collect()).collect();
    let a = model.hmm().trans();
    // The transition must not depend on the remembered output.
    for from in 0..ns {
        let reference = index[from][0];
        for o_prev in 1..ny {
            let col = index[from][o_prev];
            for t in 0..model.num_states() {
                if (a[(t, col)] - a[(t, reference)]).abs() > OUTCOME_INDEPENDENCE_TOL {
                    return Err(Error::InvalidModel(
                        "transition depends on the remembered output; cannot bin".into(),
                    ));
                }
            }
        }
    }
    let nt = ns * nb;
    let mut trans = Matrix::zeros(nt, nt);
    let mut out = Matrix::zeros(nb, nt);
    let mut prior = vec![0.0; nt];
    let mut alpha = Vec::with_capacity(nt);
    let mut rho = Vec::with_capacity(nt);
    let mut labels = Vec::with_capacity(nt);
    for s in 0..ns {
        for (bi, b) in bins.iter().enumerate() {
            let t = s * nb + bi;
            alpha.push(s);
            rho.push(bi);
            labels.push(format!("{}:{}", model.physical_labels()[s], out_labels[bi]));
            out[(bi, t)] = 1.0;
            prior[t] = b.clone().map(|y| model.prior()[index[s][y]]).sum();
            for from in 0..ns {
                let src = index[from][0];
                let p: f64 = b.clone().map(|y| a[(index[s][y], src)]).sum();
                for bj in 0..nb {
                    trans[(t, from * nb + bj)] = p;
                }
            }
        }
    }
    let hmm = Hmm::with_labels(trans, out, prior, labels, out_labels)?;
    ExpandedHmm::outcome_expanded(hmm, model.physical_labels().to_vec(), alpha, rho)
}

/// Number of sequences evaluated per candidate is capped at this by default.
pub const DEFAULT_BINNING_CAP: f64 = 1e7;

/// Outcome of an exhaustive binning search.
#[derive(Debug, Clone, Serialize)]
pub struct BinningSearch {
    pub best: Partition,
    pub infidelity: f64,
    /// Every candidate with its infidelity, in enumeration order.
    pub candidates: Vec<(Partition, f64)>,
}

/// Searches all consecutive partitions with `num_bins` bins for the one that
/// minimizes the exact infidelity of the binned model at horizon `n` under
/// `policy`. Ties go to the lexicographically smallest boundary list.
pub fn optimize_binning(
    model: &ExpandedHmm,
    num_bins: usize,
    n: usize,
    policy: &Policy,
    actions: &ActionSet,
    work_cap: f64,
) -> Result<BinningSearch> {
    let sequences = (num_bins as f64).powi(n as i32);
    if sequences > work_cap {
        return Err(Error::work_cap("binned exact evaluation", sequences, work_cap));
    }
    let candidates = Partition::enumerate(model.num_outputs(), num_bins)?;
    let opts = EvalOptions {
        work_cap,
        parallel: false,
    };
    let scored: Vec<(Partition, f64)> = candidates
        .into_par_iter()
        .map(|p| {
            let binned = bin_model(model, &p)?;
            let report = exact_infidelity(&binned, policy, actions, n, &opts)?;
            Ok((p, report.infidelity))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, (_, v)) in scored.iter().enumerate() {
        if *v < scored[best].1 {
            best = i;
        }
    }
    Ok(BinningSearch {
        best: scored[best].0.clone(),
        infidelity: scored[best].1,
        candidates: scored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::three_state_model;

    #[test]
    fn enumeration_counts_match_binomials() {
        assert_eq!(Partition::enumerate(16, 4).unwrap().len(), 455);
        assert_eq!(Partition::enumerate(5, 1).unwrap().len(), 1);
        assert_eq!(Partition::enumerate(5, 5).unwrap().len(), 1);
        let all = Partition::enumerate(6, 3).unwrap();
        assert_eq!(all.len(), 10);
        assert_eq!(all[0].boundaries(), &[1, 2]);
        assert_eq!(all[9].boundaries(), &[4, 5]);
        assert!(all.windows(2).all(|w| w[0].boundaries() < w[1].boundaries()));
    }

    #[test]
    fn bins_cover_and_are_disjoint() {
        let p = Partition::new(16, vec![1, 2, 3]).unwrap();
        let bins = p.bins();
        assert_eq!(bins, vec![0..1, 1..2, 2..3, 3..16]);
        for y in 0..16 {
            assert!(bins[p.bin_of(y)].contains(&y));
        }
    }

    #[test]
    fn bad_boundaries_rejected() {
        assert!(Partition::new(4, vec![2, 2]).is_err());
        assert!(Partition::new(4, vec![0]).is_err());
        assert!(Partition::new(4, vec![4]).is_err());
        assert!(serde_json::from_str::<Partition>(r#"{"num_outputs":3,"boundaries":[3]}"#).is_err());
    }

    #[test]
    fn trivial_model_binning_merges_output_rows() {
        let m = ExpandedHmm::trivial(three_state_model(0.1, 0.2).unwrap());
        let p = Partition::new(3, vec![2]).unwrap();
        let b = bin_model(&m, &p).unwrap();
        assert_eq!(b.num_outputs(), 2);
        assert!((b.emission(0, 1) - (0.4 + 0.2)).abs() < 1e-15);
        for s in b.hmm().out().column_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(bin_model(&m, &Partition::singletons(4)).is_err());
    }
}
