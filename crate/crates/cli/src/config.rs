use std::fs;
use std::path::{Path, PathBuf};

use adaptive_readout::builders::{synthetic_be9, synthetic_be9_actions, RateModel};
use adaptive_readout::eval::{Grid, Method};
use adaptive_readout::{ActionSet, Error, Policy};
use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::Value;

/// The fully resolved inputs of a run, echoed into every output file.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lookahead: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actions: Option<ActionSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub work_cap: Option<f64>,
    /// Builder parameters (three-state `a`, `b`, rate-model overrides).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            ..Default::default()
        }
    }

    /// Checks the numeric invariants shared by all commands.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.steps == Some(0) {
            bail!(config("--steps must be at least 1"));
        }
        if self.bins == Some(0) {
            bail!(config("--bins must be at least 1"));
        }
        if self.lookahead == Some(0) {
            bail!(config("--lookahead must be at least 1"));
        }
        if self.trials == Some(0) {
            bail!(config("--trials must be at least 1"));
        }
        if let Some(cap) = self.work_cap {
            if !(cap > 0.0) {
                bail!(config("--work-cap must be positive"));
            }
        }
        if self.grid.as_ref().is_some_and(Grid::is_empty) {
            bail!(config("the grid is empty"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

fn config(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

/// Reads `key` from an output file of this tool, or the whole document if
/// it was written by hand without the envelope.
pub fn read_payload<T: serde::de::DeserializeOwned>(path: &Path, key: &str) -> anyhow::Result<T> {
    let mut doc = read_json(path)?;
    let wrapped = doc.get("run_config").is_some() && doc.get(key).is_some();
    let value = if wrapped { doc[key].take() } else { doc };
    serde_json::from_value(value)
        .map_err(Error::from)
        .with_context(|| format!("reading {key} from {}", path.display()))
}

/// `identity`, `transpositions`, `three-cycles`, `be9`, or a JSON file with a
/// list of permutations.
pub fn parse_actions(arg: &str, num_physical: usize) -> anyhow::Result<ActionSet> {
    Ok(match arg {
        "identity" => ActionSet::identity_only(num_physical),
        "transpositions" => ActionSet::transpositions(num_physical),
        "three-cycles" => ActionSet::with_three_cycles(num_physical),
        "be9" => {
            let a = synthetic_be9_actions();
            if a.num_states() != num_physical {
                bail!(Error::InvalidAction(format!(
                    "the be9 actions act on {} states, the model has {num_physical}",
                    a.num_states()
                )));
            }
            a
        }
        path => {
            let perms: Vec<adaptive_readout::Permutation> = read_payload(Path::new(path), "actions")?;
            ActionSet::new(num_physical, perms)?
        }
    })
}

/// `no-perms`, `min-entropy[:g]`, or a policy file written by `solve`.
pub fn parse_policy(arg: &str, lookahead: Option<usize>) -> anyhow::Result<Policy> {
    if arg == "no-perms" || arg == "none" {
        return Ok(Policy::NoPerms);
    }
    if let Some(rest) = arg.strip_prefix("min-entropy") {
        let g = match rest.strip_prefix(':') {
            Some(g) => g.parse().map_err(|_| config(format!("bad look-ahead in {arg:?}")))?,
            None if rest.is_empty() => lookahead.unwrap_or(2),
            None => bail!(config(format!("unknown policy {arg:?}"))),
        };
        return Ok(Policy::MinEntropy { lookahead: g });
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!(config(format!("unknown policy {arg:?} (not a keyword or a file)")));
    }
    read_payload(path, "policy")
}

/// A rate model file, or `be9` for the bundled synthetic model.
pub fn parse_rate_model(arg: &str) -> anyhow::Result<RateModel> {
    if arg == "be9" {
        return Ok(synthetic_be9());
    }
    let rm: RateModel = read_payload(Path::new(arg), "rate_model")?;
    rm.validate()?;
    Ok(rm)
}

fn parse_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| config(format!("bad number {v:?}")).into())
        })
        .collect()
}

/// `start..end:count` as a list; linear unless `geometric`.
fn parse_range(s: &str, geometric: bool) -> anyhow::Result<Option<Vec<f64>>> {
    let Some((range, count)) = s.split_once(':') else {
        return Ok(None);
    };
    let Some((lo, hi)) = range.split_once("..") else {
        return Ok(None);
    };
    let lo: f64 = lo.trim().parse().map_err(|_| config(format!("bad range start in {s:?}")))?;
    let hi: f64 = hi.trim().parse().map_err(|_| config(format!("bad range end in {s:?}")))?;
    let count: usize = count.trim().parse().map_err(|_| config(format!("bad count in {s:?}")))?;
    if count == 0 {
        bail!(config("grid ranges need at least one point"));
    }
    if geometric && !(lo > 0.0 && hi > 0.0) {
        bail!(config("geometric ranges need positive endpoints"));
    }
    let at = |i: usize| {
        let f = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
        if geometric {
            lo * (hi / lo).powf(f)
        } else {
            lo + (hi - lo) * f
        }
    };
    Ok(Some((0..count).map(at).collect()))
}

/// Grid syntax:
///
/// * `dt:0.5,1,53.9` or `dt:0.5..60:12` (linear) in microseconds;
/// * `ab:0.005..0.3:10`, a geometric square grid of `(a, b)`;
/// * `ab:0.01/0.01,0.1/0.2`, explicit `(a, b)` points;
/// * a JSON file holding a grid object.
pub fn parse_grid(arg: &str) -> anyhow::Result<Grid> {
    if let Some(rest) = arg.strip_prefix("dt:") {
        let dt_us = match parse_range(rest, false)? {
            Some(v) => v,
            None => parse_list(rest)?,
        };
        if dt_us.iter().any(|&d| !(d > 0.0)) {
            bail!(config("time steps must be positive"));
        }
        return Ok(Grid::Dt { dt_us });
    }
    if let Some(rest) = arg.strip_prefix("ab:") {
        let points = match parse_range(rest, true)? {
            Some(v) => v.iter().flat_map(|&a| v.iter().map(move |&b| (a, b))).collect(),
            None => rest
                .split(',')
                .map(|p| {
                    let (a, b) = p
                        .split_once('/')
                        .ok_or_else(|| config(format!("expected a/b, got {p:?}")))?;
                    let a = a.trim().parse().map_err(|_| config(format!("bad a in {p:?}")))?;
                    let b = b.trim().parse().map_err(|_| config(format!("bad b in {p:?}")))?;
                    Ok((a, b))
                })
                .collect::<anyhow::Result<_>>()?,
        };
        return Ok(Grid::ThreeState { points });
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!(config(format!("unknown grid {arg:?}")));
    }
    read_payload(path, "grid")
}

/// Comma-separated method names; a bare `min-entropy` takes `lookahead`.
pub fn parse_methods(arg: &str, lookahead: Option<usize>) -> anyhow::Result<Vec<Method>> {
    arg.split(',')
        .map(|m| {
            let m = m.trim();
            if m == "min-entropy" {
                if let Some(g) = lookahead {
                    return Ok(Method::MinEntropy { lookahead: g });
                }
            }
            Ok(m.parse::<Method>()?)
        })
        .collect()
}
