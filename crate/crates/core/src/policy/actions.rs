use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::ExpandedHmm;

/// A permutation of the physical states; `map[s]` is the image of `s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PermutationRecord")]
pub struct Permutation {
    map: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PermutationRecord {
    Named { map: Vec<usize>, name: Option<String> },
    Plain(Vec<usize>),
}

impl TryFrom<PermutationRecord> for Permutation {
    type Error = Error;

    fn try_from(r: PermutationRecord) -> Result<Self> {
        match r {
            PermutationRecord::Named { map, name } => Permutation::new(map, name),
            PermutationRecord::Plain(map) => Permutation::new(map, None),
        }
    }
}

impl Permutation {
    pub fn new(map: Vec<usize>, name: Option<String>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &s in &map {
            if s >= map.len() || seen[s] {
                return Err(Error::InvalidAction(format!("{map:?} is not a bijection")));
            }
            seen[s] = true;
        }
        Ok(Permutation { map, name })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            map: (0..n).collect(),
            name: Some("identity".into()),
        }
    }

    /// Exchanges `i` and `j`.
    pub fn swap(n: usize, i: usize, j: usize) -> Result<Self> {
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidAction(format!("swap({i}, {j}) on {n} states")));
        }
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(i, j);
        Ok(Permutation {
            map,
            name: Some(format!("swap_{i}_{j}")),
        })
    }

    /// The cycle `cycle[0] -> cycle[1] -> ... -> cycle[0]`.
    pub fn cycle(n: usize, cycle: &[usize], name: Option<String>) -> Result<Self> {
        let mut map: Vec<usize> = (0..n).collect();
        for (k, &s) in cycle.iter().enumerate() {
            if s >= n {
                return Err(Error::out_of_range("cycle element", s, n));
            }
            map[s] = cycle[(k + 1) % cycle.len()];
        }
        Permutation::new(map, name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// Name if present, otherwise the image list.
    pub fn display_name(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!("{:?}", self.map),
        }
    }

    #[inline]
    pub fn apply(&self, s: usize) -> usize {
        self.map[s]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &s)| i == s)
    }

    pub fn inverse(&self) -> Permutation {
        let mut map = vec![0; self.map.len()];
        for (s, &t) in self.map.iter().enumerate() {
            map[t] = s;
        }
        Permutation { map, name: None }
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &Permutation) -> Permutation {
        Permutation {
            map: first.map.iter().map(|&s| self.map[s]).collect(),
            name: None,
        }
    }
}

/// The permutations available between steps. Index 0 is always the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Permutation>", into = "Vec<Permutation>")]
pub struct ActionSet {
    actions: Vec<Permutation>,
}

impl TryFrom<Vec<Permutation>> for ActionSet {
    type Error = Error;

    fn try_from(perms: Vec<Permutation>) -> Result<Self> {
        let n = perms.first().map(Permutation::len).ok_or(Error::EmptyActionSet)?;
        ActionSet::new(n, perms)
    }
}

impl From<ActionSet> for Vec<Permutation> {
    fn from(a: ActionSet) -> Self {
        a.actions
    }
}

impl ActionSet {
    /// Builds an action set over `n` states. The identity is placed first
    /// and duplicates (by image list) are dropped, keeping the first name.
    pub fn new(n: usize, perms: Vec<Permutation>) -> Result<Self> {
        let mut actions = vec![Permutation::identity(n)];
        for p in perms {
            if p.len() != n {
                return Err(Error::InvalidAction(format!(
                    "{} acts on {} states, expected {n}",
                    p.display_name(),
                    p.len()
                )));
            }
            if p.is_identity() {
                if let Some(name) = p.name {
                    actions[0].name = Some(name);
                }
                continue;
            }
            if !actions.iter().any(|a| a.map == p.map) {
                actions.push(p);
            }
        }
        Ok(ActionSet { actions })
    }

    /// Only the identity (no permutations).
    pub fn identity_only(n: usize) -> Self {
        ActionSet {
            actions: vec![Permutation::identity(n)],
        }
    }

    /// The identity and every transposition, ordered `(0,1), (0,2), ..., (n-2,n-1)`.
    pub fn transpositions(n: usize) -> Self {
        let mut actions = vec![Permutation::identity(n)];
        for i in 0..n {
            for j in i + 1..n {
                actions.push(Permutation::swap(n, i, j).expect("valid indices"));
            }
        }
        ActionSet { actions }
    }

    /// Transpositions plus all 3-cycles.
    pub fn with_three_cycles(n: usize) -> Self {
        let mut set = Self::transpositions(n);
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    for c in [[i, j, k], [i, k, j]] {
                        let name = format!("cycle_{}_{}_{}", c[0], c[1], c[2]);
                        set.actions
                            .push(Permutation::cycle(n, &c, Some(name)).expect("valid indices"));
                    }
                }
            }
        }
        set
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Number of physical states acted on.
    pub fn num_states(&self) -> usize {
        self.actions[0].len()
    }

    pub fn actions(&self) -> &[Permutation] {
        &self.actions
    }

    pub fn get(&self, index: usize) -> Result<&Permutation> {
        self.actions
            .get(index)
            .ok_or_else(|| Error::out_of_range("action", index, self.actions.len()))
    }

    pub fn names(&self) -> Vec<String> {
        self.actions.iter().map(Permutation::display_name).collect()
    }

    /// Position of the action with this name.
    pub fn find(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.name() == Some(name))
    }

    /// Lifts every action to the HMM states of `model`.
    pub fn lift(&self, model: &ExpandedHmm) -> Result<LiftedActions> {
        let maps = self
            .actions
            .iter()
            .map(|a| model.lift(a))
            .collect::<Result<Vec<_>>>()?;
        Ok(LiftedActions { maps })
    }
}

/// An [`ActionSet`] lifted to HMM states: `map(a)[t]` is the state that `t`
/// is moved to by action `a`.
#[derive(Debug, Clone)]
pub struct LiftedActions {
    maps: Vec<Vec<usize>>,
}

impl LiftedActions {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    #[inline]
    pub fn map(&self, action: usize) -> &[usize] {
        &self.maps[action]
    }

    /// The lifted map, or `None` for the identity (index 0).
    pub fn for_step(&self, action: usize) -> Option<&[usize]> {
        if action == 0 {
            None
        } else {
            Some(&self.maps[action])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{expand, step_kernel, RateModel};
    use crate::linalg::Matrix;

    #[test]
    fn transposition_set_layout() {
        let a = ActionSet::transpositions(3);
        assert_eq!(a.names(), vec!["identity", "swap_0_1", "swap_0_2", "swap_1_2"]);
        assert_eq!(a.actions()[3].as_slice(), &[0, 2, 1]);
        assert_eq!(ActionSet::with_three_cycles(3).len(), 6);
    }

    #[test]
    fn identity_is_prepended_and_duplicates_dropped() {
        let swap = Permutation::swap(3, 0, 1).unwrap();
        let set = ActionSet::new(3, vec![swap.clone(), Permutation::identity(3), swap]).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.actions()[0].is_identity());
    }

    #[test]
    fn non_bijections_rejected() {
        assert!(Permutation::new(vec![0, 0, 1], None).is_err());
        assert!(serde_json::from_str::<Permutation>("[1, 2, 3]").is_err());
        let p: Permutation = serde_json::from_str(r#"{"name": "t", "map": [1, 0]}"#).unwrap();
        assert_eq!(p.name(), Some("t"));
        let q: Permutation = serde_json::from_str("[1, 0]").unwrap();
        assert_eq!(q.as_slice(), p.as_slice());
    }

    #[test]
    fn inverse_and_compose() {
        let c = Permutation::cycle(4, &[0, 2, 3], None).unwrap();
        assert_eq!(c.as_slice(), &[2, 1, 3, 0]);
        assert!(c.inverse().compose(&c).is_identity());
    }

    #[test]
    fn lifted_action_preserves_remembered_output_and_commutes_with_alpha() {
        let rm = RateModel {
            rates: Matrix::from_rows(&[vec![-10.0, 5.0], vec![10.0, -5.0]]).unwrap(),
            emission_rates: vec![1000.0, 20000.0],
            dt_us: 50.0,
            n_max: 2,
            prior: vec![0.5, 0.5],
            quad_points: 4,
            state_labels: vec![],
            description: None,
        };
        let kernel = step_kernel(&rm, 4).unwrap();
        let m = expand(&kernel, &rm.prior, &rm.labels()).unwrap();
        let swap = Permutation::swap(2, 0, 1).unwrap();
        let lifted = m.lift(&swap).unwrap();
        let rho = m.rho().unwrap();
        for t in 0..m.num_states() {
            assert_eq!(rho[lifted[t]], rho[t]);
            assert_eq!(m.alpha()[lifted[t]], swap.apply(m.alpha()[t]));
        }
    }
}
