//! Structural Metropolis–Hastings moves on a single tree.
//!
//! Each call proposes one move — grow (probability 0.25), prune (0.25), or
//! change (0.50) — accepts it by the Metropolis–Hastings ratio of integrated
//! leaf likelihoods (leaf values marginalized under their conjugate normal
//! prior), and then redraws every leaf value from its conjugate normal full
//! conditional. A move with no legal proposal is an identity move (the tree
//! structure is returned unchanged, leaf values still redrawn).
//!
//! ## Proposal bookkeeping
//!
//! Candidate cutpoints live on fixed per-variable grids; a node's cell is
//! tracked as a half-open index interval `[lo, hi)` into each variable's grid,
//! narrowed by the rules on the path from the root. A variable is *available*
//! at a node when its interval is non-empty, which makes "the rule conjunction
//! describes a non-empty cell" exact and independent of the training rows.
//! Grow proposals pick a growable leaf uniformly, then a variable uniformly
//! among available ones, then a cutpoint uniformly within the interval; prune
//! picks uniformly among branches whose children are both leaves; change
//! re-draws the rule of such a branch from the same proposal distribution
//! (exactly symmetric, so only the likelihood ratio enters).

use rand::Rng;

use crate::config::BartConfig;
use crate::data::{CutpointGrid, DesignMatrix};
use crate::tree::{DecisionTree, TreeNode};

/// Training-data view handed to the move sampler: covariates plus the fixed
/// cutpoint grids derived from (or supplied for) them.
#[derive(Debug, Clone, Copy)]
pub struct TreeData<'a> {
    /// Covariate rows the residuals are aligned with.
    pub x: &'a DesignMatrix,
    /// Candidate cutpoints per variable.
    pub grids: &'a CutpointGrid,
}

/// Which structural move was proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    /// Split a leaf into a branch with two leaves.
    Grow,
    /// Collapse a branch with two leaf children into a leaf.
    Prune,
    /// Re-draw the decision rule of a branch with two leaf children.
    Change,
}

/// Result of one sampler step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveOutcome {
    /// The move type that was selected.
    pub kind: MoveKind,
    /// Whether the structural proposal was accepted (identity moves and
    /// rejections both report `false`).
    pub accepted: bool,
}

/// Per-variable cell interval in grid-index space: cut indices in `[lo, hi)`
/// are strictly inside the node's cell.
type CellIntervals = Vec<(usize, usize)>;

fn root_intervals(grids: &CutpointGrid) -> CellIntervals {
    (0..grids.num_vars()).map(|v| (0, grids.cuts(v).len())).collect()
}

/// Cell intervals of `node`, found by replaying the rules on its root path.
fn cell_intervals(tree: &DecisionTree, grids: &CutpointGrid, node: usize) -> CellIntervals {
    let mut intervals = root_intervals(grids);
    let path = tree.path_to(node).expect("node must be reachable from the root");
    for (branch, went_left) in path {
        if let TreeNode::Branch { var, cut, .. } = tree.nodes[branch] {
            let ci = grids
                .index_of(var, cut)
                .expect("branch cutpoints always come from the grid");
            let (lo, hi) = intervals[var];
            intervals[var] = if went_left { (lo, ci.min(hi)) } else { (ci.max(lo) + 1, hi) };
        }
    }
    intervals
}

fn has_available_rule(intervals: &CellIntervals) -> bool {
    intervals.iter().any(|&(lo, hi)| hi > lo)
}

/// Reduced log integrated likelihood of one leaf's residuals with the leaf
/// value marginalized out: terms constant across a move (which conserves row
/// sets and squared totals) are dropped.
///
/// Full form: `-n/2 ln(2πσ²) + ½ ln(σ²/(σ²+nτ²)) − s2/(2σ²) + τ²s1²/(2σ²(σ²+nτ²))`;
/// the first and third terms cancel between the leaves a move touches.
fn log_marginal(n: usize, s1: f64, sigma2: f64, tau2: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let denom = sigma2 + n * tau2;
    0.5 * (sigma2 / denom).ln() + tau2 * s1 * s1 / (2.0 * sigma2 * denom)
}

/// Sufficient statistics (count, residual sum) per arena node for the rows
/// currently routed to it.
fn leaf_stats(tree: &DecisionTree, routing: &[usize], residuals: &[f64]) -> Vec<(usize, f64)> {
    let mut stats = vec![(0usize, 0.0f64); tree.num_nodes()];
    for (row, &node) in routing.iter().enumerate() {
        stats[node].0 += 1;
        stats[node].1 += residuals[row];
    }
    stats
}

/// Log of the prior leaf factor for a node at `depth`: `ln(1 − p_split)` when
/// the node has an available rule, 0 when it is forced to stay a leaf.
fn log_leaf_factor(config: &BartConfig, depth: usize, growable: bool) -> f64 {
    if growable {
        (1.0 - config.split_probability(depth)).ln()
    } else {
        0.0
    }
}

const P_GROW: f64 = 0.25;
const P_PRUNE: f64 = 0.25;

/// Draws leaf values from their conjugate normal full conditionals.
fn redraw_leaf_values(
    tree: &mut DecisionTree,
    routing: &[usize],
    residuals: &[f64],
    sigma2: f64,
    tau2: f64,
    rng: &mut impl Rng,
) {
    let stats = leaf_stats(tree, routing, residuals);
    for idx in 0..tree.num_nodes() {
        if let TreeNode::Leaf { value } = &mut tree.nodes[idx] {
            let (n, s1) = stats[idx];
            let denom = sigma2 + n as f64 * tau2;
            let mean = tau2 * s1 / denom;
            let var = sigma2 * tau2 / denom;
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            *value = mean + var.sqrt() * z;
        }
    }
}

/// One Metropolis–Hastings structural move followed by a conjugate redraw of
/// all leaf values. Mutates `tree` in place and reports what happened.
///
/// `residuals` are this tree's partial residuals (row-aligned with `data.x`),
/// `sigma` the current error standard deviation. Passing zero rows makes every
/// likelihood ratio exactly one, so the chain samples the structure prior —
/// the basis of the prior-recovery test.
pub fn sample_tree_move(
    tree: &mut DecisionTree,
    data: &TreeData,
    residuals: &[f64],
    sigma: f64,
    config: &BartConfig,
    rng: &mut impl Rng,
) -> MoveOutcome {
    debug_assert_eq!(residuals.len(), data.x.num_rows(), "residuals must align with rows");
    debug_assert_eq!(data.grids.num_vars(), data.x.num_cols(), "one grid per covariate");
    let sigma2 = sigma * sigma;
    let tau = config.leaf_prior_sd();
    let tau2 = tau * tau;

    let u: f64 = rng.gen();
    let kind = if u < P_GROW {
        MoveKind::Grow
    } else if u < P_GROW + P_PRUNE {
        MoveKind::Prune
    } else {
        MoveKind::Change
    };

    let routing = tree.route_rows(data.x);
    let accepted = match kind {
        MoveKind::Grow => try_grow(tree, data, residuals, &routing, sigma2, tau2, config, rng),
        MoveKind::Prune => try_prune(tree, data, residuals, &routing, sigma2, tau2, config, rng),
        MoveKind::Change => try_change(tree, data, residuals, &routing, sigma2, tau2, rng),
    };

    let routing = if accepted { tree.route_rows(data.x) } else { routing };
    redraw_leaf_values(tree, &routing, residuals, sigma2, tau2, rng);
    debug_assert!(tree.is_structurally_valid());
    MoveOutcome { kind, accepted }
}

#[allow(clippy::too_many_arguments)]
fn try_grow(
    tree: &mut DecisionTree,
    data: &TreeData,
    residuals: &[f64],
    routing: &[usize],
    sigma2: f64,
    tau2: f64,
    config: &BartConfig,
    rng: &mut impl Rng,
) -> bool {
    let depths = tree.node_depths();
    let leaves = tree.leaf_indices();
    let growable: Vec<(usize, CellIntervals)> = leaves
        .iter()
        .filter_map(|&leaf| {
            let intervals = cell_intervals(tree, data.grids, leaf);
            has_available_rule(&intervals).then_some((leaf, intervals))
        })
        .collect();
    if growable.is_empty() {
        return false; // no legal proposal: identity move
    }

    let (leaf, intervals) = &growable[rng.gen_range(0..growable.len())];
    let leaf = *leaf;
    let avail_vars: Vec<usize> =
        (0..intervals.len()).filter(|&v| intervals[v].1 > intervals[v].0).collect();
    let var = avail_vars[rng.gen_range(0..avail_vars.len())];
    let (lo, hi) = intervals[var];
    let cut_idx = rng.gen_range(lo..hi);
    let cut = data.grids.cuts(var)[cut_idx];

    // Split the leaf's rows by the proposed rule.
    let mut n_left = 0usize;
    let mut s1_left = 0.0f64;
    let mut n_all = 0usize;
    let mut s1_all = 0.0f64;
    for (row, &node) in routing.iter().enumerate() {
        if node == leaf {
            n_all += 1;
            s1_all += residuals[row];
            if data.x.get(row, var) <= cut {
                n_left += 1;
                s1_left += residuals[row];
            }
        }
    }
    let n_right = n_all - n_left;
    let s1_right = s1_all - s1_left;

    // Children growability under the narrowed cells.
    let child_growable = |child_lo: usize, child_hi: usize| -> bool {
        child_hi > child_lo
            || (0..intervals.len())
                .any(|v| v != var && intervals[v].1 > intervals[v].0)
    };
    let left_growable = child_growable(lo, cut_idx);
    let right_growable = child_growable(cut_idx + 1, hi);

    let depth = depths[leaf];
    let p_split = config.split_probability(depth);
    let log_prior = p_split.ln() - (1.0 - p_split).ln()
        + log_leaf_factor(config, depth + 1, left_growable)
        + log_leaf_factor(config, depth + 1, right_growable);

    // Collapsible-branch count after the grow: the new branch joins the set;
    // the leaf's parent leaves it if this leaf was its last leaf sibling pair.
    let num_collapsible_after = {
        let before = tree.collapsible_branch_indices().len();
        let parent_was_collapsible = tree
            .path_to(leaf)
            .expect("leaf reachable")
            .last()
            .map(|&(parent, _)| match tree.nodes[parent] {
                TreeNode::Branch { left, right, .. } => {
                    tree.nodes[left].is_leaf() && tree.nodes[right].is_leaf()
                }
                TreeNode::Leaf { .. } => false,
            })
            .unwrap_or(false);
        before + 1 - usize::from(parent_was_collapsible)
    };
    let log_proposal = P_PRUNE.ln() - (num_collapsible_after as f64).ln() - P_GROW.ln()
        + (growable.len() as f64).ln();

    let log_lik = log_marginal(n_left, s1_left, sigma2, tau2)
        + log_marginal(n_right, s1_right, sigma2, tau2)
        - log_marginal(n_all, s1_all, sigma2, tau2);

    let accept = rng.gen::<f64>().ln() < log_prior + log_proposal + log_lik;
    if accept {
        tree.grow(leaf, var, cut);
        #[cfg(debug_assertions)]
        {
            debug_assert_eq!(tree.collapsible_branch_indices().len(), num_collapsible_after);
        }
    }
    accept
}

#[allow(clippy::too_many_arguments)]
fn try_prune(
    tree: &mut DecisionTree,
    data: &TreeData,
    residuals: &[f64],
    routing: &[usize],
    sigma2: f64,
    tau2: f64,
    config: &BartConfig,
    rng: &mut impl Rng,
) -> bool {
    let collapsible = tree.collapsible_branch_indices();
    if collapsible.is_empty() {
        return false; // single-leaf tree: identity move
    }
    let branch = collapsible[rng.gen_range(0..collapsible.len())];
    let (left, right) = match tree.nodes[branch] {
        TreeNode::Branch { left, right, .. } => (left, right),
        TreeNode::Leaf { .. } => unreachable!("collapsible indices are branches"),
    };

    let depths = tree.node_depths();
    let depth = depths[branch];
    let stats = leaf_stats(tree, routing, residuals);
    let (n_left, s1_left) = stats[left];
    let (n_right, s1_right) = stats[right];
    let n_all = n_left + n_right;
    let s1_all = s1_left + s1_right;

    let left_growable = has_available_rule(&cell_intervals(tree, data.grids, left));
    let right_growable = has_available_rule(&cell_intervals(tree, data.grids, right));

    let p_split = config.split_probability(depth);
    let log_prior = (1.0 - p_split).ln() - p_split.ln()
        - log_leaf_factor(config, depth + 1, left_growable)
        - log_leaf_factor(config, depth + 1, right_growable);

    // Growable-leaf count after the prune: current growable leaves minus the
    // two children, plus the collapsed node (growable: it held a rule).
    let num_growable_after = {
        let growable_now: usize = tree
            .leaf_indices()
            .into_iter()
            .filter(|&leaf| {
                leaf != left
                    && leaf != right
                    && has_available_rule(&cell_intervals(tree, data.grids, leaf))
            })
            .count();
        growable_now + 1
    };
    let log_proposal = P_GROW.ln() - (num_growable_after as f64).ln()
        + (collapsible.len() as f64).ln()
        - P_PRUNE.ln();

    let log_lik = log_marginal(n_all, s1_all, sigma2, tau2)
        - log_marginal(n_left, s1_left, sigma2, tau2)
        - log_marginal(n_right, s1_right, sigma2, tau2);

    let accept = rng.gen::<f64>().ln() < log_prior + log_proposal + log_lik;
    if accept {
        tree.prune(branch, 0.0);
    }
    accept
}

fn try_change(
    tree: &mut DecisionTree,
    data: &TreeData,
    residuals: &[f64],
    routing: &[usize],
    sigma2: f64,
    tau2: f64,
    rng: &mut impl Rng,
) -> bool {
    let collapsible = tree.collapsible_branch_indices();
    if collapsible.is_empty() {
        return false;
    }
    let branch = collapsible[rng.gen_range(0..collapsible.len())];
    let (old_var, old_cut, left, right) = match tree.nodes[branch] {
        TreeNode::Branch { var, cut, left, right } => (var, cut, left, right),
        TreeNode::Leaf { .. } => unreachable!("collapsible indices are branches"),
    };

    let intervals = cell_intervals(tree, data.grids, branch);
    let avail_vars: Vec<usize> =
        (0..intervals.len()).filter(|&v| intervals[v].1 > intervals[v].0).collect();
    debug_assert!(!avail_vars.is_empty(), "a branch always has at least its own rule");
    let var = avail_vars[rng.gen_range(0..avail_vars.len())];
    let (lo, hi) = intervals[var];
    let cut = data.grids.cuts(var)[rng.gen_range(lo..hi)];

    // Old and new child sufficient statistics over the branch's rows.
    let mut old_left = (0usize, 0.0f64);
    let mut new_left = (0usize, 0.0f64);
    let mut all = (0usize, 0.0f64);
    for (row, &node) in routing.iter().enumerate() {
        if node == left || node == right {
            all.0 += 1;
            all.1 += residuals[row];
            if data.x.get(row, old_var) <= old_cut {
                old_left.0 += 1;
                old_left.1 += residuals[row];
            }
            if data.x.get(row, var) <= cut {
                new_left.0 += 1;
                new_left.1 += residuals[row];
            }
        }
    }
    let old_right = (all.0 - old_left.0, all.1 - old_left.1);
    let new_right = (all.0 - new_left.0, all.1 - new_left.1);

    // Proposal and rule-prior factors cancel exactly (same cell, same
    // variable-then-cut distribution); only the likelihood ratio remains.
    let log_lik = log_marginal(new_left.0, new_left.1, sigma2, tau2)
        + log_marginal(new_right.0, new_right.1, sigma2, tau2)
        - log_marginal(old_left.0, old_left.1, sigma2, tau2)
        - log_marginal(old_right.0, old_right.1, sigma2, tau2);

    let accept = rng.gen::<f64>().ln() < log_lik;
    if accept {
        if let TreeNode::Branch { var: v, cut: c, .. } = &mut tree.nodes[branch] {
            *v = var;
            *c = cut;
        }
    }
    accept
}

/// Draws a tree directly from the structure prior (availability-aware
/// branching process), used as the oracle for prior-recovery tests.
pub fn sample_tree_from_prior(
    grids: &CutpointGrid,
    config: &BartConfig,
    rng: &mut impl Rng,
) -> DecisionTree {
    let mut tree = DecisionTree::stump(0.0);
    // Depth-first expansion with explicit cell intervals.
    let mut stack: Vec<(usize, usize, CellIntervals)> = vec![(0, 0, root_intervals(grids))];
    while let Some((node, depth, intervals)) = stack.pop() {
        if !has_available_rule(&intervals) {
            continue;
        }
        if rng.gen::<f64>() >= config.split_probability(depth) {
            continue;
        }
        let avail_vars: Vec<usize> =
            (0..intervals.len()).filter(|&v| intervals[v].1 > intervals[v].0).collect();
        let var = avail_vars[rng.gen_range(0..avail_vars.len())];
        let (lo, hi) = intervals[var];
        let cut_idx = rng.gen_range(lo..hi);
        let cut = grids.cuts(var)[cut_idx];
        let (left, right) = tree.grow(node, var, cut);
        let mut left_iv = intervals.clone();
        left_iv[var] = (lo, cut_idx);
        let mut right_iv = intervals;
        right_iv[var] = (cut_idx + 1, hi);
        stack.push((left, depth + 1, left_iv));
        stack.push((right, depth + 1, right_iv));
    }
    tree
}
