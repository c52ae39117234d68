//! Arena-indexed binary decision trees.

use serde::{Deserialize, Serialize};

use crate::data::DesignMatrix;

/// One node of a [`DecisionTree`], stored in an arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// Internal node with rule "go left iff x[var] <= cut".
    Branch {
        /// Covariate column index the rule tests.
        var: usize,
        /// Split cutpoint; ties route left.
        cut: f64,
        /// Arena index of the left (≤) child.
        left: usize,
        /// Arena index of the right (>) child.
        right: usize,
    },
    /// Terminal node carrying a leaf value μ.
    Leaf {
        /// Leaf output value.
        value: f64,
    },
}

impl TreeNode {
    /// True for leaf nodes.
    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

/// A binary regression tree; node 0 is the root.
///
/// Invariants: every branch has exactly two children, every root-to-leaf rule
/// conjunction describes a non-empty cell of the covariate domain (enforced by
/// the move sampler, which only proposes cuts strictly inside a node's cell),
/// and every input row routes to exactly one leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Arena of nodes; index 0 is the root.
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// A single-leaf tree with the given value.
    pub fn stump(value: f64) -> Self {
        Self { nodes: vec![TreeNode::Leaf { value }] }
    }

    /// Number of nodes (branches + leaves).
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Arena indices of all leaves, in arena order.
    pub fn leaf_indices(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect()
    }

    /// Arena indices of branches whose children are both leaves.
    pub fn collapsible_branch_indices(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| match self.nodes[i] {
                TreeNode::Branch { left, right, .. } => {
                    self.nodes[left].is_leaf() && self.nodes[right].is_leaf()
                }
                TreeNode::Leaf { .. } => false,
            })
            .collect()
    }

    /// Depth of every node (root = 0); unreachable nodes get `usize::MAX`.
    pub fn node_depths(&self) -> Vec<usize> {
        let mut depths = vec![usize::MAX; self.nodes.len()];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((idx, d)) = stack.pop() {
            depths[idx] = d;
            if let TreeNode::Branch { left, right, .. } = self.nodes[idx] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        depths
    }

    /// The sequence of `(branch index, went_left)` steps from the root to
    /// `target`, or `None` if the node is unreachable.
    pub fn path_to(&self, target: usize) -> Option<Vec<(usize, bool)>> {
        fn walk(
            tree: &DecisionTree,
            idx: usize,
            target: usize,
            path: &mut Vec<(usize, bool)>,
        ) -> bool {
            if idx == target {
                return true;
            }
            if let TreeNode::Branch { left, right, .. } = tree.nodes[idx] {
                path.push((idx, true));
                if walk(tree, left, target, path) {
                    return true;
                }
                path.pop();
                path.push((idx, false));
                if walk(tree, right, target, path) {
                    return true;
                }
                path.pop();
            }
            false
        }
        let mut path = Vec::new();
        walk(self, 0, target, &mut path).then_some(path)
    }

    /// Leaf index that covariate vector `x` routes to.
    pub fn leaf_for(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                TreeNode::Leaf { .. } => return idx,
                TreeNode::Branch { var, cut, left, right } => {
                    idx = if x[var] <= cut { left } else { right };
                }
            }
        }
    }

    /// Leaf value reached by `x`.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_for(x)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Branch { .. } => unreachable!("leaf_for returns a leaf"),
        }
    }

    /// Routes every row of `x` to its leaf; returns arena indices per row.
    pub fn route_rows(&self, x: &DesignMatrix) -> Vec<usize> {
        (0..x.num_rows()).map(|i| self.leaf_for(x.row(i))).collect()
    }

    /// Splits leaf `leaf_idx` into a branch with two fresh value-0 leaves.
    ///
    /// Returns the arena indices of the (left, right) children.
    pub fn grow(&mut self, leaf_idx: usize, var: usize, cut: f64) -> (usize, usize) {
        debug_assert!(self.nodes[leaf_idx].is_leaf(), "grow target must be a leaf");
        let left = self.nodes.len();
        let right = left + 1;
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        self.nodes[leaf_idx] = TreeNode::Branch { var, cut, left, right };
        (left, right)
    }

    /// Collapses branch `branch_idx` (whose children must be leaves) into a
    /// leaf, then compacts the arena so no garbage nodes remain.
    pub fn prune(&mut self, branch_idx: usize, value: f64) {
        match self.nodes[branch_idx] {
            TreeNode::Branch { left, right, .. } => {
                debug_assert!(
                    self.nodes[left].is_leaf() && self.nodes[right].is_leaf(),
                    "prune target must have two leaf children"
                );
            }
            TreeNode::Leaf { .. } => panic!("prune target must be a branch"),
        }
        self.nodes[branch_idx] = TreeNode::Leaf { value };
        self.compact();
    }

    /// Rebuilds the arena in preorder, dropping unreachable nodes.
    pub fn compact(&mut self) {
        let mut fresh: Vec<TreeNode> = Vec::with_capacity(self.nodes.len());
        fn copy(old: &[TreeNode], idx: usize, fresh: &mut Vec<TreeNode>) -> usize {
            let slot = fresh.len();
            fresh.push(old[idx].clone());
            if let TreeNode::Branch { left, right, .. } = old[idx] {
                let new_left = copy(old, left, fresh);
                let new_right = copy(old, right, fresh);
                if let TreeNode::Branch { left: l, right: r, .. } = &mut fresh[slot] {
                    *l = new_left;
                    *r = new_right;
                }
            }
            slot
        }
        copy(&self.nodes, 0, &mut fresh);
        self.nodes = fresh;
    }

    /// Verifies arena invariants (used by tests and debug assertions).
    pub fn is_structurally_valid(&self) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        // Every node reachable from the root exactly once, indices in range.
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            if idx >= self.nodes.len() || seen[idx] {
                return false;
            }
            seen[idx] = true;
            if let TreeNode::Branch { left, right, .. } = self.nodes[idx] {
                stack.push(left);
                stack.push(right);
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split_tree() -> DecisionTree {
        // Root split x0 <= 0.5, leaves −1 (left) and +1 (right).
        DecisionTree {
            nodes: vec![
                TreeNode::Branch { var: 0, cut: 0.5, left: 1, right: 2 },
                TreeNode::Leaf { value: -1.0 },
                TreeNode::Leaf { value: 1.0 },
            ],
        }
    }

    #[test]
    fn boundary_value_routes_to_left_child() {
        let t = split_tree();
        assert_eq!(t.predict_row(&[0.5]), -1.0);
        assert_eq!(t.predict_row(&[0.5000001]), 1.0);
        assert_eq!(t.predict_row(&[0.3]), -1.0);
    }

    #[test]
    fn grow_then_prune_restores_stump_shape() {
        let mut t = DecisionTree::stump(0.0);
        let (l, r) = t.grow(0, 0, 0.5);
        assert_eq!((l, r), (1, 2));
        assert_eq!(t.num_nodes(), 3);
        assert!(t.is_structurally_valid());
        t.prune(0, 7.0);
        assert_eq!(t.num_nodes(), 1);
        assert_eq!(t.predict_row(&[0.1]), 7.0);
        assert!(t.is_structurally_valid());
    }

    #[test]
    fn compact_preserves_predictions_after_internal_prune() {
        // Depth-2 tree; prune an inner branch and check routing is unchanged
        // for rows outside the pruned cell.
        let mut t = DecisionTree::stump(0.0);
        t.grow(0, 0, 0.5);
        t.grow(1, 1, 0.25); // left child becomes a branch on x1
        if let TreeNode::Leaf { value } = &mut t.nodes[2] {
            *value = 9.0;
        }
        assert!(t.is_structurally_valid());
        t.prune(1, 4.0);
        assert!(t.is_structurally_valid());
        assert_eq!(t.num_nodes(), 3);
        assert_eq!(t.predict_row(&[0.4, 0.9]), 4.0);
        assert_eq!(t.predict_row(&[0.9, 0.9]), 9.0);
    }

    #[test]
    fn path_and_depth_bookkeeping() {
        let mut t = DecisionTree::stump(0.0);
        t.grow(0, 0, 0.5);
        t.grow(2, 1, 0.7);
        let depths = t.node_depths();
        assert_eq!(depths[0], 0);
        assert_eq!(depths[1], 1);
        assert_eq!(depths[2], 1);
        assert_eq!(depths[3], 2);
        let path = t.path_to(4).unwrap();
        assert_eq!(path, vec![(0, false), (2, false)]);
        assert_eq!(t.path_to(0).unwrap(), vec![]);
    }

    #[test]
    fn collapsible_branches_require_two_leaf_children() {
        let mut t = DecisionTree::stump(0.0);
        t.grow(0, 0, 0.5);
        assert_eq!(t.collapsible_branch_indices(), vec![0]);
        t.grow(1, 0, 0.25);
        // Root has a branch child now; only the inner branch is collapsible.
        assert_eq!(t.collapsible_branch_indices(), vec![1]);
    }
}
