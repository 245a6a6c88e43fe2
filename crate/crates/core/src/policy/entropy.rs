use super::belief::{observe_all, posterior_entropy, transition_update_lifted, BeliefState};
use super::optimal::{check_tree_size, TIE_TOLERANCE};
use super::{ActionSet, LiftedActions};
use crate::error::{Error, Result};
use crate::hmm::ExpandedHmm;
use crate::linalg::CompensatedSum;

/// Default budget on `(|A| |Y|)^g` for one look-ahead tree.
pub const DEFAULT_LOOKAHEAD_CAP: f64 = 1e8;

#[derive(Debug, Clone)]
struct BeliefNode {
    belief: BeliefState,
    /// One entry per action; empty at the leaves.
    children: Vec<ActionNode>,
}

#[derive(Debug, Clone)]
struct ActionNode {
    /// Weight and posterior per output; `None` for impossible outputs.
    branches: Vec<Option<(f64, BeliefNode)>>,
}

impl BeliefNode {
    fn leaf(belief: BeliefState) -> Self {
        BeliefNode {
            belief,
            children: Vec::new(),
        }
    }

    /// Grows the subtree so every leaf sits `depth` levels below this node.
    fn extend(&mut self, depth: usize, model: &ExpandedHmm, lifted: &LiftedActions) {
        if depth == 0 {
            self.children.clear();
            return;
        }
        if self.children.is_empty() {
            self.children = (0..lifted.len())
                .map(|a| {
                    let eta = transition_update_lifted(&self.belief, lifted.for_step(a), model)
                        .expect("post-observation belief");
                    ActionNode {
                        branches: observe_all(&eta, model)
                            .into_iter()
                            .map(|b| b.map(|(w, beta)| (w, BeliefNode::leaf(beta))))
                            .collect(),
                    }
                })
                .collect();
        }
        for child in &mut self.children {
            for (_, node) in child.branches.iter_mut().flatten() {
                node.extend(depth - 1, model, lifted);
            }
        }
    }

    fn value(&self) -> f64 {
        if self.children.is_empty() {
            return posterior_entropy(&self.belief);
        }
        self.children
            .iter()
            .map(ActionNode::value)
            .fold(f64::INFINITY, f64::min)
    }

    fn depth(&self) -> usize {
        self.children
            .iter()
            .flat_map(|c| c.branches.iter().flatten())
            .map(|(_, n)| n.depth() + 1)
            .max()
            .unwrap_or(0)
    }
}

impl ActionNode {
    fn value(&self) -> f64 {
        self.branches
            .iter()
            .flatten()
            .map(|(w, n)| w * n.value())
            .collect::<CompensatedSum>()
            .value()
    }
}

/// The belief tree of the minimum-entropy heuristic, kept between steps so
/// that only the newest layer has to be computed after each observation.
#[derive(Debug, Clone)]
pub struct LookaheadTree {
    root: BeliefNode,
    depth: usize,
}

impl LookaheadTree {
    /// Builds the full tree of depth `depth` below a post-observation belief.
    pub fn build(
        belief: BeliefState,
        depth: usize,
        model: &ExpandedHmm,
        lifted: &LiftedActions,
    ) -> Self {
        let mut root = BeliefNode::leaf(belief);
        root.extend(depth, model, lifted);
        LookaheadTree { root, depth }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn belief(&self) -> &BeliefState {
        &self.root.belief
    }

    /// Expected terminal entropy of each first action under optimal play of
    /// the remaining levels. Empty for a depth-0 tree.
    pub fn action_values(&self) -> Vec<f64> {
        self.root.children.iter().map(ActionNode::value).collect()
    }

    /// Minimal expected terminal entropy.
    pub fn value(&self) -> f64 {
        self.root.value()
    }

    /// First action of an entropy-minimizing plan; ties resolve to the lowest
    /// index and a depth-0 tree returns the identity.
    pub fn best_action(&self) -> usize {
        let values = self.action_values();
        let mut best = 0;
        for (a, &v) in values.iter().enumerate().skip(1) {
            if v < values[best] - TIE_TOLERANCE {
                best = a;
            }
        }
        best
    }

    /// Re-roots the tree at the belief reached by `action` and output `y`,
    /// then grows or trims it to `new_depth`.
    pub fn advance(
        self,
        action: usize,
        y: usize,
        new_depth: usize,
        model: &ExpandedHmm,
        lifted: &LiftedActions,
    ) -> Result<Self> {
        let mut children = self.root.children;
        if action >= children.len() {
            return Err(Error::out_of_range("action", action, children.len()));
        }
        let mut branches = std::mem::take(&mut children[action].branches);
        if y >= branches.len() {
            return Err(Error::out_of_range("output", y, branches.len()));
        }
        let (_, mut root) = branches[y]
            .take()
            .ok_or(Error::PrunedBranch { action, output: y })?;
        root.extend(new_depth, model, lifted);
        debug_assert_eq!(root.depth(), new_depth);
        Ok(LookaheadTree {
            root,
            depth: new_depth,
        })
    }
}

/// First action of the plan minimizing the expected initial-state entropy
/// after `depth` more steps.
pub fn min_entropy_action(
    beta: &BeliefState,
    depth: usize,
    model: &ExpandedHmm,
    actions: &ActionSet,
) -> Result<usize> {
    check_tree_size("look-ahead tree", actions.len(), model.num_outputs(), depth, DEFAULT_LOOKAHEAD_CAP)?;
    let lifted = actions.lift(model)?;
    Ok(LookaheadTree::build(beta.clone(), depth, model, &lifted).best_action())
}
