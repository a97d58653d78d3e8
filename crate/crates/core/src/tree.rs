//! Least-squares regression trees grown best-first to an exact leaf budget,
//! and their decomposition into interval rules.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::rule::{Condition, Rule};

/// Minimum rows per child for a split to be admissible.
pub(crate) const MIN_LEAF: usize = 5;

#[derive(Debug, Clone)]
enum TreeNode {
    Leaf {
        value: f64,
    },
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted regression tree over a row-major feature matrix.
#[derive(Debug, Clone)]
pub(crate) struct RegressionTree {
    nodes: Vec<TreeNode>,
    root: usize,
    n_leaves: usize,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct FrontierEntry {
    node: usize,
    rows: Vec<usize>,
    candidate: Option<Candidate>,
}

/// Best admissible split of `rows` on one feature: candidates are midpoints
/// between consecutive distinct sorted values; gain is the between-child
/// variance reduction `n_l·n_r/n · (mean_l − mean_r)²`. Scanning thresholds
/// in ascending order and requiring strict improvement makes the result
/// deterministic (smallest threshold wins a tie).
fn best_split_on_feature(
    features: ArrayView2<'_, f64>,
    targets: &[f64],
    rows: &[usize],
    feature: usize,
) -> Option<Candidate> {
    let n = rows.len();
    if n < 2 * MIN_LEAF {
        return None;
    }
    let mut order: Vec<usize> = rows.to_vec();
    order.sort_by(|&a, &b| {
        features[[a, feature]]
            .partial_cmp(&features[[b, feature]])
            .expect("finite feature values")
            .then(a.cmp(&b))
    });
    let total: f64 = order.iter().map(|&i| targets[i]).sum();
    let mut left_sum = 0.0;
    let mut best: Option<Candidate> = None;
    for i in 0..n - 1 {
        left_sum += targets[order[i]];
        let n_left = i + 1;
        let n_right = n - n_left;
        if n_left < MIN_LEAF {
            continue;
        }
        if n_right < MIN_LEAF {
            break;
        }
        let v = features[[order[i], feature]];
        let v_next = features[[order[i + 1], feature]];
        if v == v_next {
            continue;
        }
        let mut threshold = 0.5 * (v + v_next);
        if threshold <= v {
            // midpoint rounded down to the left value; fall back to the
            // right value so v still routes left under x < threshold
            threshold = v_next;
        }
        let mean_left = left_sum / n_left as f64;
        let mean_right = (total - left_sum) / n_right as f64;
        let gain = (n_left as f64) * (n_right as f64) / (n as f64)
            * (mean_left - mean_right).powi(2);
        if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
            best = Some(Candidate {
                gain,
                feature,
                threshold,
            });
        }
    }
    best
}

/// Best split across all features. Feature results are computed in parallel
/// but reduced in ascending feature order, so ties in gain resolve to the
/// smallest feature index regardless of thread count.
fn best_split(features: ArrayView2<'_, f64>, targets: &[f64], rows: &[usize]) -> Option<Candidate> {
    let p = features.ncols();
    let per_feature: Vec<Option<Candidate>> = (0..p)
        .into_par_iter()
        .map(|f| best_split_on_feature(features, targets, rows, f))
        .collect();
    let mut best: Option<Candidate> = None;
    for cand in per_feature.into_iter().flatten() {
        if best.is_none_or(|b| cand.gain > b.gain) {
            best = Some(cand);
        }
    }
    best
}

fn mean(targets: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&i| targets[i]).sum::<f64>() / rows.len() as f64
}

impl RegressionTree {
    /// Grows a tree on the subsample `rows`, splitting the current leaf with
    /// the largest gain until `max_leaves` terminal nodes are reached or no
    /// admissible split remains. Leaf values are target means over `rows`.
    pub(crate) fn fit(
        features: ArrayView2<'_, f64>,
        targets: &[f64],
        rows: &[usize],
        max_leaves: usize,
    ) -> Self {
        assert!(max_leaves >= 1, "leaf budget must be positive");
        assert!(!rows.is_empty(), "cannot fit a tree on zero rows");
        let mut nodes = vec![TreeNode::Leaf {
            value: mean(targets, rows),
        }];
        let mut frontier = vec![FrontierEntry {
            node: 0,
            rows: rows.to_vec(),
            candidate: best_split(features, targets, rows),
        }];
        let mut n_leaves = 1;
        while n_leaves < max_leaves {
            // earliest entry wins gain ties → insertion-order determinism
            let Some(pick) = frontier
                .iter()
                .enumerate()
                .filter_map(|(idx, e)| e.candidate.map(|c| (idx, c.gain)))
                .fold(None::<(usize, f64)>, |acc, (idx, gain)| match acc {
                    Some((_, best)) if best >= gain => acc,
                    _ => Some((idx, gain)),
                })
            else {
                break;
            };
            let entry = frontier.swap_remove(pick.0);
            let cand = entry.candidate.expect("picked entries have a candidate");
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = entry
                .rows
                .iter()
                .partition(|&&i| features[[i, cand.feature]] < cand.threshold);
            let left = nodes.len();
            nodes.push(TreeNode::Leaf {
                value: mean(targets, &left_rows),
            });
            let right = nodes.len();
            nodes.push(TreeNode::Leaf {
                value: mean(targets, &right_rows),
            });
            nodes[entry.node] = TreeNode::Internal {
                feature: cand.feature,
                threshold: cand.threshold,
                left,
                right,
            };
            n_leaves += 1;
            frontier.push(FrontierEntry {
                node: left,
                candidate: best_split(features, targets, &left_rows),
                rows: left_rows,
            });
            frontier.push(FrontierEntry {
                node: right,
                candidate: best_split(features, targets, &right_rows),
                rows: right_rows,
            });
        }
        Self {
            nodes,
            root: 0,
            n_leaves,
        }
    }

    pub(crate) fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    /// Routes one feature row to its leaf value.
    pub(crate) fn predict_row(&self, features: ArrayView2<'_, f64>, row: usize) -> f64 {
        let mut node = self.root;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if features[[row, *feature]] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Every non-root node contributes one rule: the conjunction of the
    /// interval conditions along its root path (`x < c` → upper bound,
    /// `x ≥ c` → lower bound). A tree with D leaves yields 2(D−1) rules.
    pub(crate) fn decompose_into_rules(&self) -> Vec<Rule> {
        let mut rules = Vec::with_capacity(2 * (self.n_leaves.saturating_sub(1)));
        let mut path: Vec<Condition> = Vec::new();
        self.collect_rules(self.root, true, &mut path, &mut rules);
        rules
    }

    fn collect_rules(
        &self,
        node: usize,
        is_root: bool,
        path: &mut Vec<Condition>,
        rules: &mut Vec<Rule>,
    ) {
        if !is_root {
            rules.push(
                Rule::new(path.iter().cloned())
                    .expect("path conditions are nested intervals and cannot be empty"),
            );
        }
        if let TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } = &self.nodes[node]
        {
            path.push(Condition::below(*feature, *threshold));
            self.collect_rules(*left, false, path, rules);
            path.pop();
            path.push(Condition::at_least(*feature, *threshold));
            self.collect_rules(*right, false, path, rules);
            path.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{Array2, ArrayView1};
    use proptest::prelude::*;

    fn matrix(rows: &[Vec<f64>]) -> Array2<f64> {
        let n = rows.len();
        let p = rows[0].len();
        Array2::from_shape_vec((n, p), rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn constant_targets_yield_single_leaf() {
        let x = matrix(&(0..12).map(|i| vec![f64::from(i)]).collect::<Vec<_>>());
        let targets = vec![3.5; 12];
        let rows: Vec<usize> = (0..12).collect();
        let tree = RegressionTree::fit(x.view(), &targets, &rows, 4);
        assert_eq!(tree.n_leaves(), 1);
        assert_eq!(tree.predict_row(x.view(), 0), 3.5);
        assert!(tree.decompose_into_rules().is_empty());
    }

    #[test]
    fn stump_splits_binary_feature_at_half() {
        // feature 1 is a 0/1 indicator; targets are −1/+1 accordingly
        let rows_data: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![f64::from(i), f64::from(u8::from(i % 2 == 0))])
            .collect();
        let x = matrix(&rows_data);
        let targets: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let rows: Vec<usize> = (0..10).collect();
        let tree = RegressionTree::fit(x.view(), &targets, &rows, 2);
        assert_eq!(tree.n_leaves(), 2);
        let rules = tree.decompose_into_rules();
        assert_eq!(rules.len(), 2);
        // left rule: x2 < 0.5; right rule: x2 ≥ 0.5
        assert_eq!(rules[0].conditions()[0].feature, 1);
        assert_eq!(rules[0].conditions()[0].upper, 0.5);
        assert_eq!(rules[1].conditions()[0].lower, 0.5);
        // leaf predictions recover the class means
        for i in 0..10 {
            let expected = if i % 2 == 0 { 1.0 } else { -1.0 };
            assert_relative_eq!(tree.predict_row(x.view(), i), expected);
        }
    }

    #[test]
    fn min_leaf_blocks_small_splits() {
        let x = matrix(&(0..9).map(|i| vec![f64::from(i)]).collect::<Vec<_>>());
        let targets: Vec<f64> = (0..9).map(f64::from).collect();
        let rows: Vec<usize> = (0..9).collect();
        // 9 rows cannot produce two children of ≥ 5 rows
        let tree = RegressionTree::fit(x.view(), &targets, &rows, 2);
        assert_eq!(tree.n_leaves(), 1);
    }

    #[test]
    fn gain_tie_prefers_lower_feature_index() {
        // two identical columns → identical best gains; feature 0 must win
        let rows_data: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i); 2]).collect();
        let x = matrix(&rows_data);
        let targets: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 1.0 }).collect();
        let rows: Vec<usize> = (0..10).collect();
        let tree = RegressionTree::fit(x.view(), &targets, &rows, 2);
        let rules = tree.decompose_into_rules();
        assert_eq!(rules[0].conditions()[0].feature, 0);
        assert_eq!(rules[0].conditions()[0].upper, 4.5);
    }

    #[test]
    fn rule_count_is_twice_leaves_minus_one() {
        let rows_data: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![f64::from(i), f64::from((i * 7) % 13)])
            .collect();
        let x = matrix(&rows_data);
        let targets: Vec<f64> = (0..40).map(|i| f64::from(i % 5)).collect();
        let rows: Vec<usize> = (0..40).collect();
        for budget in [2, 3, 4, 5] {
            let tree = RegressionTree::fit(x.view(), &targets, &rows, budget);
            assert_eq!(
                tree.decompose_into_rules().len(),
                2 * (tree.n_leaves() - 1)
            );
        }
    }

    #[test]
    fn rule_depth_bounded_by_leaf_budget() {
        let rows_data: Vec<Vec<f64>> = (0..60).map(|i| vec![f64::from(i)]).collect();
        let x = matrix(&rows_data);
        let targets: Vec<f64> = (0..60).map(|i| (f64::from(i) * 0.37).sin()).collect();
        let rows: Vec<usize> = (0..60).collect();
        let budget = 5;
        let tree = RegressionTree::fit(x.view(), &targets, &rows, budget);
        for rule in tree.decompose_into_rules() {
            assert!(rule.conditions().len() <= budget - 1);
        }
    }

    #[test]
    fn leaves_fit_only_on_subsample() {
        let rows_data: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i)]).collect();
        let x = matrix(&rows_data);
        let mut targets = vec![0.0; 20];
        for t in targets.iter_mut().take(20).skip(10) {
            *t = 100.0; // rows outside the subsample carry wild targets
        }
        let rows: Vec<usize> = (0..10).collect();
        let tree = RegressionTree::fit(x.view(), &targets, &rows, 2);
        // predictions come from subsample means only
        assert_eq!(tree.predict_row(x.view(), 0), 0.0);
    }

    fn fired(x: ArrayView1<'_, f64>, rules: &[Rule]) -> usize {
        rules
            .iter()
            .filter(|r| r.evaluate(x).unwrap() == 1.0)
            .count()
    }

    /// Depth of the leaf an input routes to (root = depth 0).
    fn route_depth(tree: &RegressionTree, x: ArrayView1<'_, f64>) -> usize {
        let mut node = tree.root;
        let mut depth = 0;
        loop {
            match &tree.nodes[node] {
                TreeNode::Leaf { .. } => return depth,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *threshold { *left } else { *right };
                    depth += 1;
                }
            }
        }
    }

    proptest! {
        /// Decomposed rules are structurally consistent with the tree: the
        /// rules firing on any input are exactly the non-root nodes along
        /// its traversal path, so their count equals the reached leaf's depth.
        #[test]
        fn firing_rules_trace_a_single_path(
            values in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 2),
                12..30
            ),
            budget in 2usize..5,
            probe in proptest::collection::vec(-6.0f64..6.0, 2),
        ) {
            let x = matrix(&values);
            let targets: Vec<f64> = values.iter().map(|r| r[0] * 0.5 + r[1]).collect();
            let rows: Vec<usize> = (0..values.len()).collect();
            let tree = RegressionTree::fit(x.view(), &targets, &rows, budget);
            let rules = tree.decompose_into_rules();
            prop_assert_eq!(rules.len(), 2 * (tree.n_leaves() - 1));
            let probe_arr = ndarray::Array1::from(probe);
            prop_assert_eq!(
                fired(probe_arr.view(), &rules),
                route_depth(&tree, probe_arr.view())
            );
        }

        /// Splitting never increases training SSE relative to the root mean.
        #[test]
        fn fitted_tree_does_not_underperform_root_mean(
            values in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 2),
                12..40
            ),
            budget in 2usize..6,
        ) {
            let x = matrix(&values);
            let targets: Vec<f64> = values.iter().map(|r| (r[0] * r[1]).tanh()).collect();
            let rows: Vec<usize> = (0..values.len()).collect();
            let tree = RegressionTree::fit(x.view(), &targets, &rows, budget);
            let mu = targets.iter().sum::<f64>() / targets.len() as f64;
            let sse_root: f64 = targets.iter().map(|t| (t - mu).powi(2)).sum();
            let sse_tree: f64 = rows
                .iter()
                .map(|&i| (targets[i] - tree.predict_row(x.view(), i)).powi(2))
                .sum();
            prop_assert!(sse_tree <= sse_root + 1e-9);
        }
    }
}
