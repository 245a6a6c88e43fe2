use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ActionSet;
use crate::error::{Error, Result};

/// A precomputed adaptive policy: the action to take after each reachable
/// output prefix `y1, ..., yk` with `k < n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LookupRecord", into = "LookupRecord")]
pub struct LookupPolicy {
    n: usize,
    actions: ActionSet,
    table: BTreeMap<Vec<usize>, usize>,
    fidelity: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct LookupRecord {
    n: usize,
    actions: ActionSet,
    table: BTreeMap<String, usize>,
    #[serde(default)]
    fidelity: Option<f64>,
}

fn prefix_key(prefix: &[usize]) -> String {
    prefix
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_key(key: &str) -> Result<Vec<usize>> {
    key.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidParameter(format!("bad prefix key {key:?}: {e}")))
        })
        .collect()
}

impl TryFrom<LookupRecord> for LookupPolicy {
    type Error = Error;

    fn try_from(r: LookupRecord) -> Result<Self> {
        let table = r
            .table
            .iter()
            .map(|(k, &v)| Ok((parse_key(k)?, v)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        LookupPolicy::new(r.n, r.actions, table, r.fidelity)
    }
}

impl From<LookupPolicy> for LookupRecord {
    fn from(p: LookupPolicy) -> Self {
        LookupRecord {
            n: p.n,
            actions: p.actions,
            table: p.table.iter().map(|(k, &v)| (prefix_key(k), v)).collect(),
            fidelity: p.fidelity,
        }
    }
}

impl LookupPolicy {
    pub fn new(
        n: usize,
        actions: ActionSet,
        table: BTreeMap<Vec<usize>, usize>,
        fidelity: Option<f64>,
    ) -> Result<Self> {
        for (prefix, &a) in &table {
            if prefix.is_empty() || prefix.len() >= n {
                return Err(Error::InvalidParameter(format!(
                    "prefix [{}] has length outside 1..{n}",
                    prefix_key(prefix)
                )));
            }
            if a >= actions.len() {
                return Err(Error::out_of_range("action", a, actions.len()));
            }
        }
        Ok(LookupPolicy {
            n,
            actions,
            table,
            fidelity,
        })
    }

    /// Horizon the table was built for.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    /// Fidelity recorded when the table was computed.
    pub fn fidelity(&self) -> Option<f64> {
        self.fidelity
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[usize], usize)> {
        self.table.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn get(&self, prefix: &[usize]) -> Option<usize> {
        self.table.get(prefix).copied()
    }

    /// Action after `prefix`, or an error if the prefix is not in the table.
    pub fn action(&self, prefix: &[usize]) -> Result<usize> {
        self.get(prefix)
            .ok_or_else(|| Error::PolicyIncomplete(prefix_key(prefix)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LookupPolicy {
        let mut table = BTreeMap::new();
        table.insert(vec![0], 3);
        table.insert(vec![2], 1);
        table.insert(vec![0, 1], 0);
        LookupPolicy::new(3, ActionSet::transpositions(3), table, Some(0.9)).unwrap()
    }

    #[test]
    fn json_uses_comma_joined_keys() {
        let p = sample();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"0,1\":0"));
        assert!(text.contains("\"swap_1_2\""));
        let back: LookupPolicy = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn missing_prefix_is_reported() {
        let p = sample();
        assert_eq!(p.action(&[2]).unwrap(), 1);
        assert!(matches!(p.action(&[1]), Err(Error::PolicyIncomplete(k)) if k == "1"));
    }

    #[test]
    fn prefixes_must_fit_horizon() {
        let mut table = BTreeMap::new();
        table.insert(vec![0, 0, 0], 0);
        assert!(LookupPolicy::new(3, ActionSet::identity_only(2), table, None).is_err());
    }
}
