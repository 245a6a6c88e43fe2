//! Discretization of a continuous-time fluorescence model into an
//! outcome-expanded HMM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{ExpandedHmm, Hmm};
use crate::linalg::Matrix;

pub const DEFAULT_N_MAX: usize = 15;
pub const DEFAULT_QUAD_POINTS: usize = 32;

const EXPM_TOL: f64 = 1e-13;
const EXPM_MAX_TERMS: usize = 60;
const CLAMP_TOL: f64 = 1e-12;

/// Continuous-time level dynamics with per-level photon detection rates.
///
/// `rates[(s, s2)]` is the rate (1/s) of jumping from level `s2` to level
/// `s`; the diagonal holds minus the total departure rate so every column sums
/// to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    #[serde(rename = "Q")]
    pub rates: Matrix,
    /// Detected photons per second for each level.
    pub emission_rates: Vec<f64>,
    /// Step duration in microseconds.
    pub dt_us: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    pub prior: Vec<f64>,
    #[serde(default = "default_quad_points")]
    pub quad_points: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

fn default_quad_points() -> usize {
    DEFAULT_QUAD_POINTS
}

impl RateModel {
    pub fn num_levels(&self) -> usize {
        self.rates.cols()
    }

    /// Step duration in seconds.
    pub fn dt(&self) -> f64 {
        self.dt_us * 1e-6
    }

    pub fn with_dt_us(&self, dt_us: f64) -> RateModel {
        RateModel {
            dt_us,
            ..self.clone()
        }
    }

    pub fn labels(&self) -> Vec<String> {
        if self.state_labels.len() == self.num_levels() {
            self.state_labels.clone()
        } else {
            (0..self.num_levels()).map(|i| i.to_string()).collect()
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_rate_matrix(&self.rates)?;
        let n = self.num_levels();
        if self.emission_rates.len() != n {
            return Err(Error::dim("emission_rates", n, self.emission_rates.len()));
        }
        if self.emission_rates.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidParameter("emission rates must be >= 0".into()));
        }
        if !(self.dt_us > 0.0) || !self.dt_us.is_finite() {
            return Err(Error::InvalidParameter(format!("dt_us = {} must be > 0", self.dt_us)));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be >= 1".into()));
        }
        if self.quad_points < 1 {
            return Err(Error::InvalidParameter("quad_points must be >= 1".into()));
        }
        if self.prior.len() != n {
            return Err(Error::dim("prior", n, self.prior.len()));
        }
        if self.prior.iter().any(|p| !(*p >= 0.0)) || (self.prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("prior must be a probability vector".into()));
        }
        Ok(())
    }

    /// Integrates the model over one step and expands it over `(level, photon count)`.
    pub fn build(&self) -> Result<ExpandedHmm> {
        let kernel = step_kernel(self, self.quad_points)?;
        expand(&kernel, &self.prior, &self.labels())
    }
}

/// Checks that off-diagonal entries are nonnegative and columns sum to zero.
pub fn validate_rate_matrix(q: &Matrix) -> Result<()> {
    let n = q.cols();
    if q.rows() != n || n == 0 {
        return Err(Error::dim("rate matrix rows", n, q.rows()));
    }
    let scale = q.as_slice().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for c in 0..n {
        let mut sum = 0.0;
        for r in 0..n {
            let v = q[(r, c)];
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("rate ({r}, {c}) is not finite")));
            }
            if r != c && v < 0.0 {
                return Err(Error::NegativeEntry {
                    what: "rate matrix".into(),
                    row: r,
                    col: c,
                    value: v,
                });
            }
            sum += v;
        }
        if sum.abs() > 1e-9 * scale {
            return Err(Error::InvalidParameter(format!(
                "rate matrix column {c} sums to {sum}, not 0"
            )));
        }
    }
    Ok(())
}

/// `exp(Q * dt)` by scaling and squaring with a truncated Taylor series.
///
/// Entries in `[-1e-12, 0)` are clamped to zero; for a rate matrix every
/// column of the result sums to one within `1e-10`.
pub fn matrix_exp(q: &Matrix, dt: f64) -> Result<Matrix> {
    validate_rate_matrix(q)?;
    let r = expm(&q.scale(dt))?;
    for (c, sum) in r.column_sums().into_iter().enumerate() {
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::Numeric(format!("exp(Q dt) column {c} sums to {sum}")));
        }
    }
    Ok(r)
}

fn expm(x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    let norm = x.norm_one();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = x.scale(0.5_f64.powi(squarings));
    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    let mut converged = false;
    for k in 1..=EXPM_MAX_TERMS {
        term = term.matmul(&scaled)?.scale(1.0 / k as f64);
        sum = sum.add(&term);
        let tn = term.norm_one();
        if tn <= f64::EPSILON * sum.norm_one() {
            converged = true;
            break;
        }
        if k == EXPM_MAX_TERMS && tn <= EXPM_TOL * sum.norm_one() {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(EXPM_MAX_TERMS));
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum)?;
    }
    for v in sum.data_mut() {
        if *v < 0.0 {
            if *v >= -CLAMP_TOL {
                *v = 0.0;
            } else {
                return Err(Error::Numeric(format!("exp(Q dt) has negative entry {v}")));
            }
        }
    }
    Ok(sum)
}

/// Poisson(`mean`) over `0..=n_max` with the tail mass folded into `n_max`.
pub fn truncated_poisson(mean: f64, n_max: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; n_max + 1];
    let mut p = (-mean).exp();
    let mut acc = 0.0;
    for (k, slot) in pmf.iter_mut().enumerate().take(n_max) {
        *slot = p;
        acc += p;
        p *= mean / (k + 1) as f64;
    }
    pmf[n_max] = (1.0 - acc).max(0.0);
    pmf
}

/// Distribution of photon counts over one step that starts in a level
/// emitting `e_from` photons/s and ends in one emitting `e_to`.
///
/// Equal rates give a plain (tail-folded) Poisson distribution. Otherwise the
/// single jump time is taken uniform over the step and the Poisson mixture is
/// integrated with `quad_points` midpoint nodes.
pub fn photon_distribution(
    e_from: f64,
    e_to: f64,
    dt: f64,
    n_max: usize,
    quad_points: usize,
) -> Result<Vec<f64>> {
    if !(e_from >= 0.0) || !(e_to >= 0.0) {
        return Err(Error::InvalidParameter("emission rates must be >= 0".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be > 0".into()));
    }
    if quad_points < 1 || n_max < 1 {
        return Err(Error::InvalidParameter("quad_points and n_max must be >= 1".into()));
    }
    if e_from == e_to {
        return Ok(truncated_poisson(e_from * dt, n_max));
    }
    let mut mix = vec![0.0; n_max + 1];
    for j in 0..quad_points {
        let t = (j as f64 + 0.5) / quad_points as f64 * dt;
        let pmf = truncated_poisson(e_from * t + e_to * (dt - t), n_max);
        for (m, p) in mix.iter_mut().zip(pmf) {
            *m += p;
        }
    }
    for m in &mut mix {
        *m /= quad_points as f64;
    }
    Ok(mix)
}

/// Joint one-step kernel `U(s, o | s') = J(o | s, s') R(s | s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    levels: usize,
    outputs: usize,
    data: Vec<f64>,
}

impl StepKernel {
    pub fn num_levels(&self) -> usize {
        self.levels
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs
    }

    /// `U(s, o | from)`.
    pub fn get(&self, s: usize, o: usize, from: usize) -> f64 {
        self.data[(s * self.outputs + o) * self.levels + from]
    }

    /// Sums over outputs, recovering `R(s | from)`.
    pub fn marginal(&self) -> Matrix {
        let mut r = Matrix::zeros(self.levels, self.levels);
        for s in 0..self.levels {
            for o in 0..self.outputs {
                for from in 0..self.levels {
                    r[(s, from)] += self.get(s, o, from);
                }
            }
        }
        r
    }
}

pub fn step_kernel(model: &RateModel, quad_points: usize) -> Result<StepKernel> {
    model.validate()?;
    let dt = model.dt();
    let r = matrix_exp(&model.rates, dt)?;
    let n = model.num_levels();
    let ny = model.n_max + 1;
    let mut data = vec![0.0; n * ny * n];
    for s in 0..n {
        for from in 0..n {
            let rp = r[(s, from)];
            if rp == 0.0 {
                continue;
            }
            let j = photon_distribution(
                model.emission_rates[from],
                model.emission_rates[s],
                dt,
                model.n_max,
                quad_points,
            )?;
            for (o, p) in j.into_iter().enumerate() {
                data[(s * ny + o) * n + from] = p * rp;
            }
        }
    }
    Ok(StepKernel {
        levels: n,
        outputs: ny,
        data,
    })
}

/// Outcome-expanded HMM from a step kernel: `A((s,o) | (s',o')) = U(s,o|s')`,
/// deterministic outputs `B(o | (s,o)) = 1` and prior mass on `o = 0`.
///
/// Expanded state `(s, o)` has index `s * |Y| + o`.
pub fn expand(kernel: &StepKernel, prior: &[f64], labels: &[String]) -> Result<ExpandedHmm> {
    let n = kernel.levels;
    let ny = kernel.outputs;
    if prior.len() != n {
        return Err(Error::dim("prior", n, prior.len()));
    }
    if labels.len() != n {
        return Err(Error::dim("level labels", n, labels.len()));
    }
    let nt = n * ny;
    let mut trans = Matrix::zeros(nt, nt);
    let mut out = Matrix::zeros(ny, nt);
    let mut nu = vec![0.0; nt];
    let mut alpha = Vec::with_capacity(nt);
    let mut rho = Vec::with_capacity(nt);
    let mut state_labels = Vec::with_capacity(nt);
    for s in 0..n {
        for o in 0..ny {
            let t = s * ny + o;
            alpha.push(s);
            rho.push(o);
            state_labels.push(format!("{}:{}", labels[s], o));
            out[(o, t)] = 1.0;
            if o == 0 {
                nu[t] = prior[s];
            }
            for from in 0..n {
                let u = kernel.get(s, o, from);
                for o_prev in 0..ny {
                    trans[(t, from * ny + o_prev)] = u;
                }
            }
        }
    }
    let output_labels = (0..ny)
        .map(|o| {
            if o + 1 == ny {
                format!("{o}+")
            } else {
                o.to_string()
            }
        })
        .collect();
    let hmm = Hmm::with_labels(trans, out, nu, state_labels, output_labels)?;
    ExpandedHmm::outcome_expanded(hmm, labels.to_vec(), alpha, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_level(q: f64, e0: f64, e1: f64, dt_us: f64, n_max: usize) -> RateModel {
        RateModel {
            rates: Matrix::from_rows(&[vec![-q, q], vec![q, -q]]).unwrap(),
            emission_rates: vec![e0, e1],
            dt_us,
            n_max,
            prior: vec![0.5, 0.5],
            quad_points: DEFAULT_QUAD_POINTS,
            state_labels: vec![],
            description: None,
        }
    }

    #[test]
    fn zero_rates_exponentiate_to_identity() {
        let r = matrix_exp(&Matrix::zeros(3, 3), 1.0).unwrap();
        assert_eq!(r, Matrix::identity(3));
    }

    #[test]
    fn symmetric_two_state_matches_eigendecomposition() {
        // Eigenvalues 0 and -2q: R(0|0) = (1 + exp(-2 q dt)) / 2.
        for &(q, dt) in &[(1.0, 0.1), (3.0e3, 53.9e-6), (50.0, 1.0), (1e-3, 2.0)] {
            let m = Matrix::from_rows(&[vec![-q, q], vec![q, -q]]).unwrap();
            let r = matrix_exp(&m, dt).unwrap();
            let stay = (1.0 + (-2.0 * q * dt).exp()) / 2.0;
            assert!((r[(0, 0)] - stay).abs() < 1e-13, "q={q} dt={dt}");
            assert!((r[(1, 0)] - (1.0 - stay)).abs() < 1e-13);
        }
    }

    #[test]
    fn semigroup_property() {
        let q = Matrix::from_rows(&[
            vec![-3.0, 1.0, 0.0],
            vec![2.0, -1.5, 4.0],
            vec![1.0, 0.5, -4.0],
        ])
        .unwrap();
        let r1 = matrix_exp(&q, 0.7).unwrap();
        let r2 = matrix_exp(&q, 1.4).unwrap();
        assert!(r1.matmul(&r1).unwrap().max_abs_diff(&r2) < 1e-12);
    }

    #[test]
    fn invalid_rate_matrix_rejected() {
        let q = Matrix::from_rows(&[vec![-1.0, 1.0], vec![0.5, -1.0]]).unwrap();
        assert!(matrix_exp(&q, 1.0).is_err());
    }

    #[test]
    fn equal_rates_zero_count_is_poisson_zero_class() {
        let e = 2.0e4;
        let dt = 30e-6;
        let j = photon_distribution(e, e, dt, 15, 32).unwrap();
        assert!((j[0] - (-e * dt).exp()).abs() < 1e-15);
    }

    #[test]
    fn bright_step_zero_count() {
        // 30 photons per 330 us over a 53.9 us step.
        let gamma = 30.0 / 330e-6;
        let dt = 53.9e-6;
        let j = photon_distribution(gamma, gamma, dt, 15, 32).unwrap();
        let mean: f64 = 30.0 * 53.9 / 330.0;
        assert!((mean - 4.9).abs() < 0.01);
        assert!((j[0] - (-mean).exp()).abs() < 1e-15);
        assert!((j[0] - 7.45e-3).abs() < 1e-4);
        // n_max = 15 keeps the overflow class below 1e-3.
        assert!(j[15] < 1e-3);
    }

    #[test]
    fn dark_levels_emit_nothing() {
        let j = photon_distribution(0.0, 0.0, 1e-5, 15, 8).unwrap();
        assert_eq!(j[0], 1.0);
        assert!(j[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn single_level_without_emission_is_trivial_kernel() {
        let m = RateModel {
            rates: Matrix::zeros(1, 1),
            emission_rates: vec![0.0],
            dt_us: 1.0,
            n_max: 3,
            prior: vec![1.0],
            quad_points: 4,
            state_labels: vec![],
            description: None,
        };
        let u = step_kernel(&m, 4).unwrap();
        assert_eq!(u.get(0, 0, 0), 1.0);
    }

    #[test]
    fn no_transitions_gives_diagonal_poisson_kernel() {
        let lambda = 1.7;
        let dt_us = 10.0;
        let m = RateModel {
            rates: Matrix::zeros(2, 2),
            emission_rates: vec![lambda / 10e-6, 0.3 / 10e-6],
            ..two_level(0.0, 0.0, 0.0, dt_us, 6)
        };
        let u = step_kernel(&m, 8).unwrap();
        let p = truncated_poisson(lambda, 6);
        for o in 0..=6 {
            assert!((u.get(0, o, 0) - p[o]).abs() < 1e-15);
            assert_eq!(u.get(1, o, 0), 0.0);
            assert_eq!(u.get(0, o, 1), 0.0);
        }
    }

    #[test]
    fn kernel_marginal_recovers_transition_matrix() {
        let m = two_level(2.0e4, 9.0e4, 5.0e3, 20.0, 10);
        let u = step_kernel(&m, 32).unwrap();
        let r = matrix_exp(&m.rates, m.dt()).unwrap();
        assert!(u.marginal().max_abs_diff(&r) < 1e-9);
        for from in 0..2 {
            let total: f64 = (0..2)
                .flat_map(|s| (0..=10).map(move |o| (s, o)))
                .map(|(s, o)| u.get(s, o, from))
                .sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn expansion_structure() {
        let m = two_level(1.0e3, 9.0e4, 5.0e3, 10.0, 1);
        let e = m.build().unwrap();
        assert_eq!(e.num_states(), 4);
        for (t, (&a, &r)) in e.alpha().iter().zip(e.rho().unwrap()).enumerate() {
            assert_eq!(t, a * 2 + r);
            assert_eq!(e.state_index(a, r), Some(t));
        }
        for sum in e.hmm().trans().column_sums() {
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // Summing the expanded transition over outputs gives R.
        let r = matrix_exp(&m.rates, m.dt()).unwrap();
        for s in 0..2 {
            for from in 0..2 {
                let t_from = e.state_index(from, 1).unwrap();
                let marg: f64 = (0..2)
                    .map(|o| e.hmm().trans()[(e.state_index(s, o).unwrap(), t_from)])
                    .sum();
                assert!((marg - r[(s, from)]).abs() < 1e-12);
            }
        }
        assert_eq!(e.prior(), &[0.5, 0.0, 0.5, 0.0]);
    }

    proptest! {
        #[test]
        fn photon_distribution_sums_to_one(
            e_from in 0.0..2.0e5f64,
            e_to in 0.0..2.0e5f64,
            dt_us in 0.1..100.0f64,
            n_max in 1usize..20,
        ) {
            let j = photon_distribution(e_from, e_to, dt_us * 1e-6, n_max, 16).unwrap();
            prop_assert_eq!(j.len(), n_max + 1);
            prop_assert!(j.iter().all(|p| *p >= 0.0));
            prop_assert!((j.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn exponential_columns_are_stochastic(
            rates in proptest::collection::vec(0.0..5.0f64, 12),
            dt in 0.01..3.0f64,
        ) {
            let n = 4;
            let mut q = Matrix::zeros(n, n);
            let mut it = rates.into_iter();
            for c in 0..n {
                for r in 0..n {
                    if r != c {
                        q[(r, c)] = it.next().unwrap();
                    }
                }
                let depart: f64 = (0..n).filter(|&r| r != c).map(|r| q[(r, c)]).sum();
                q[(c, c)] = -depart;
            }
            let r = matrix_exp(&q, dt).unwrap();
            for s in r.column_sums() {
                prop_assert!((s - 1.0).abs() < 1e-10);
            }
            prop_assert!(r.as_slice().iter().all(|v| *v >= 0.0));
        }
    }
}
