use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exact_infidelity, histogram_infidelity, EvalOptions};
use crate::builders::{bin_model, optimize_binning, three_state_model, Partition, RateModel};
use crate::error::{Error, Result};
use crate::hmm::ExpandedHmm;
use crate::policy::{solve_optimal, ActionSet, Policy, SolveOptions};

/// Method name of the extra row emitted by `(a, b)` sweeps.
pub const RATIO_METHOD: &str = "log10_ratio_noperms_over_exhaustive";

/// A readout method compared in sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Histogram,
    NoPerms,
    MinEntropy { lookahead: usize },
    Exhaustive,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Histogram => f.write_str("histogram"),
            Method::NoPerms => f.write_str("no-perms"),
            Method::MinEntropy { lookahead } => write!(f, "min-entropy:{lookahead}"),
            Method::Exhaustive => f.write_str("exhaustive"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `histogram`, `no-perms`, `exhaustive`, `min-entropy` (look-ahead
    /// 2) and `min-entropy:<g>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "histogram" => Ok(Method::Histogram),
            "no-perms" | "none" => Ok(Method::NoPerms),
            "exhaustive" | "optimal" => Ok(Method::Exhaustive),
            "min-entropy" => Ok(Method::MinEntropy { lookahead: 2 }),
            other => {
                let g = other
                    .strip_prefix("min-entropy:")
                    .and_then(|g| g.parse::<usize>().ok())
                    .filter(|&g| g >= 1)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown method {other:?}")))?;
                Ok(Method::MinEntropy { lookahead: g })
            }
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameter grid of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Grid {
    /// Step durations in microseconds for a rate model.
    Dt { dt_us: Vec<f64> },
    /// `(a, b)` points of the three-state model.
    ThreeState { points: Vec<(f64, f64)> },
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Dt { dt_us } => dt_us.len(),
            Grid::ThreeState { points } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn param_name(&self) -> &'static str {
        match self {
            Grid::Dt { .. } => "dt_us",
            Grid::ThreeState { .. } => "a,b",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: Grid,
    /// Required for [`Grid::Dt`].
    #[serde(default)]
    pub rate_model: Option<RateModel>,
    /// Defaults to the identity plus transpositions.
    #[serde(default)]
    pub actions: Option<ActionSet>,
    pub methods: Vec<Method>,
    pub n: usize,
    /// Number of bins, re-optimized at every grid point under the
    /// no-permutation policy. Histogram rows always use the unbinned model.
    #[serde(default)]
    pub bins: Option<usize>,
    pub work_cap: f64,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid_param_name: String,
    pub grid_value: String,
    pub method: String,
    pub n: usize,
    pub n_b: Option<usize>,
    pub infidelity: f64,
    pub stderr: Option<f64>,
    pub seed: Option<u64>,
}

/// Everything computed at one grid point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub grid_value: String,
    /// The model the policies were evaluated on (binned if requested).
    pub model: ExpandedHmm,
    pub partition: Option<Partition>,
    pub rows: Vec<SweepRow>,
}

fn point_rows(
    cfg: &SweepConfig,
    grid_value: String,
    raw: ExpandedHmm,
    actions: &ActionSet,
) -> Result<SweepPoint> {
    let eval_opts = EvalOptions {
        work_cap: cfg.work_cap,
        parallel: true,
    };
    let (model, partition) = match cfg.bins {
        Some(nb) if nb < raw.num_outputs() => {
            let search = optimize_binning(&raw, nb, cfg.n, &Policy::NoPerms, actions, cfg.work_cap)?;
            (bin_model(&raw, &search.best)?, Some(search.best))
        }
        _ => (raw.clone(), None),
    };
    let n_b = Some(model.num_outputs());
    let row = |method: String, infidelity: f64, n_b: Option<usize>| SweepRow {
        grid_param_name: cfg.grid.param_name().to_string(),
        grid_value: grid_value.clone(),
        method,
        n: cfg.n,
        n_b,
        infidelity,
        stderr: None,
        seed: None,
    };
    let mut rows = Vec::new();
    let mut no_perms = None;
    let mut exhaustive = None;
    for method in &cfg.methods {
        let value = match method {
            Method::Histogram => histogram_infidelity(&raw, cfg.n)?.infidelity,
            Method::NoPerms => {
                exact_infidelity(&model, &Policy::NoPerms, actions, cfg.n, &eval_opts)?.infidelity
            }
            Method::MinEntropy { lookahead } => {
                let p = Policy::MinEntropy {
                    lookahead: *lookahead,
                };
                exact_infidelity(&model, &p, actions, cfg.n, &eval_opts)?.infidelity
            }
            Method::Exhaustive => {
                let sol = solve_optimal(
                    &model,
                    actions,
                    cfg.n,
                    &SolveOptions {
                        work_cap: cfg.work_cap.max(crate::policy::DEFAULT_SOLVE_CAP),
                        parallel: true,
                    },
                )?;
                let p = Policy::Lookup(sol.policy);
                exact_infidelity(&model, &p, actions, cfg.n, &eval_opts)?.infidelity
            }
        };
        match method {
            Method::NoPerms => no_perms = Some(value),
            Method::Exhaustive => exhaustive = Some(value),
            _ => {}
        }
        let nb = if *method == Method::Histogram {
            Some(raw.num_outputs())
        } else {
            n_b
        };
        rows.push(row(method.to_string(), value, nb));
    }
    if let (Grid::ThreeState { .. }, Some(np), Some(ex)) = (&cfg.grid, no_perms, exhaustive) {
        rows.push(row(RATIO_METHOD.to_string(), (np / ex).log10(), n_b));
    }
    Ok(SweepPoint {
        grid_value,
        model,
        partition,
        rows,
    })
}

/// Evaluates every method at every grid point. Points are computed in
/// parallel and returned in grid order.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepPoint>> {
    if cfg.grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Error::InvalidParameter("no methods requested".into()));
    }
    if cfg.n == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    match &cfg.grid {
        Grid::Dt { dt_us } => {
            let rm = cfg.rate_model.as_ref().ok_or_else(|| {
                Error::InvalidParameter("a dt sweep needs a rate model".into())
            })?;
            let actions = cfg
                .actions
                .clone()
                .unwrap_or_else(|| ActionSet::transpositions(rm.num_levels()));
            dt_us
                .par_iter()
                .map(|&dt| {
                    let raw = rm.with_dt_us(dt).build()?;
                    point_rows(cfg, dt.to_string(), raw, &actions)
                })
                .collect()
        }
        Grid::ThreeState { points } => {
            let actions = cfg
                .actions
                .clone()
                .unwrap_or_else(|| ActionSet::transpositions(3));
            points
                .par_iter()
                .map(|&(a, b)| {
                    let raw = ExpandedHmm::trivial(three_state_model(a, b)?);
                    point_rows(cfg, format!("{a},{b}"), raw, &actions)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Histogram,
            Method::NoPerms,
            Method::MinEntropy { lookahead: 3 },
            Method::Exhaustive,
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("min-entropy".parse::<Method>().unwrap(), Method::MinEntropy { lookahead: 2 });
        assert!("min-entropy:0".parse::<Method>().is_err());
        assert!("best".parse::<Method>().is_err());
    }

    #[test]
    fn single_point_matches_direct_call() {
        let cfg = SweepConfig {
            grid: Grid::ThreeState {
                points: vec![(0.05, 0.05)],
            },
            rate_model: None,
            actions: None,
            methods: vec![Method::NoPerms, Method::Exhaustive],
            n: 3,
            bins: None,
            work_cap: 1e7,
        };
        let points = sweep(&cfg).unwrap();
        let rows = &points[0].rows;
        assert_eq!(rows.len(), 3);
        let m = ExpandedHmm::trivial(three_state_model(0.05, 0.05).unwrap());
        let direct = exact_infidelity(
            &m,
            &Policy::NoPerms,
            &ActionSet::transpositions(3),
            3,
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(rows[0].infidelity, direct.infidelity);
        assert_eq!(rows[2].method, RATIO_METHOD);
        assert!(rows[2].infidelity >= 0.0);
    }
}
