//! CART decision tree (Gini impurity, midpoint thresholds).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::TreeParams;
use crate::data::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        counts: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct DecisionTree {
    nodes: Vec<Node>,
    n_classes: usize,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    /// Σ over children of `n_child * gini(child)`; lower is better.
    weighted_impurity: f64,
}

impl DecisionTree {
    /// Greedy top-down growth. An impure node is split whenever depth allows
    /// and a split leaving `min_leaf` rows on each side exists, even if the
    /// best split does not lower impurity; this lets unbounded trees fit any
    /// dataset without conflicting duplicates. Ties keep the first candidate
    /// in (feature, threshold) order.
    pub(crate) fn fit(data: &Dataset, params: &TreeParams) -> Self {
        let k = data.n_classes();
        let mut nodes = vec![Node::Leaf { counts: vec![] }];
        let mut stack = vec![(0usize, (0..data.len()).collect::<Vec<_>>(), 0usize)];
        while let Some((slot, idx, depth)) = stack.pop() {
            let counts = class_counts(data, &idx, k);
            let impure = counts.iter().filter(|&&c| c > 0).count() > 1;
            let depth_ok = params.max_depth.is_none_or(|d| depth < d);
            let split = if impure && depth_ok {
                best_split(data, &idx, k, params.min_leaf.max(1))
            } else {
                None
            };
            match split {
                Some(c) => {
                    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| data.row(i)[c.feature] <= c.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { counts: vec![] });
                    let right = nodes.len();
                    nodes.push(Node::Leaf { counts: vec![] });
                    nodes[slot] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right,
                    };
                    stack.push((right, right_idx, depth + 1));
                    stack.push((left, left_idx, depth + 1));
                }
                None => nodes[slot] = Node::Leaf { counts },
            }
        }
        Self { nodes, n_classes: k }
    }

    fn leaf(&self, x: &[f64]) -> &[usize] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Leaf class frequencies with add-one smoothing:
    /// `(count_c + 1) / (n_leaf + k)`.
    pub(crate) fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let counts = self.leaf(x);
        let total: usize = counts.iter().sum();
        let denom = (total + self.n_classes) as f64;
        counts.iter().map(|&c| (c + 1) as f64 / denom).collect()
    }

    #[cfg(test)]
    pub(crate) fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn class_counts(data: &Dataset, idx: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &i in idx {
        counts[data.label(i)] += 1;
    }
    counts
}

/// `n * gini = n - Σ c² / n`.
fn weighted_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

fn best_split(data: &Dataset, idx: &[usize], k: usize, min_leaf: usize) -> Option<Candidate> {
    let n = idx.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total = class_counts(data, idx, k);
    let mut best: Option<Candidate> = None;
    let mut order = idx.to_vec();
    let mut left = vec![0usize; k];
    let mut right = vec![0usize; k];
    for feature in 0..data.n_features() {
        order.sort_by(|&a, &b| data.row(a)[feature].total_cmp(&data.row(b)[feature]));
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&total);
        for pos in 0..n - 1 {
            let y = data.label(order[pos]);
            left[y] += 1;
            right[y] -= 1;
            let n_left = pos + 1;
            let lo = data.row(order[pos])[feature];
            let hi = data.row(order[pos + 1])[feature];
            if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let score = weighted_gini(&left, n_left) + weighted_gini(&right, n - n_left);
            if best.as_ref().is_none_or(|b| score < b.weighted_impurity) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Candidate {
                    feature,
                    threshold,
                    weighted_impurity: score,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_needs_zero_gain_root_split() {
        let ds = Dataset::from_rows(
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![0, 1, 1, 0],
            2,
        )
        .unwrap();
        let t = DecisionTree::fit(&ds, &TreeParams::default());
        for i in 0..4 {
            let p = t.predict_proba(ds.row(i));
            assert_eq!(p[ds.label(i)], 2.0 / 3.0);
        }
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn smoothed_pure_leaf() {
        // Five rows of class 2 in a 3-class problem: one pure leaf.
        let ds = Dataset::from_rows(vec![vec![0.5]; 5], vec![2; 5], 3).unwrap();
        let t = DecisionTree::fit(&ds, &TreeParams::default());
        assert_eq!(t.predict_proba(&[0.1]), vec![1.0 / 8.0, 1.0 / 8.0, 6.0 / 8.0]);
    }

    #[test]
    fn depth_zero_is_constant() {
        let ds = Dataset::from_rows(vec![vec![0.0], vec![1.0], vec![0.5]], vec![0, 1, 1], 2).unwrap();
        let t = DecisionTree::fit(
            &ds,
            &TreeParams {
                max_depth: Some(0),
                min_leaf: 1,
            },
        );
        assert_eq!(t.predict_proba(&[0.0]), vec![0.4, 0.6]);
        assert_eq!(t.predict_proba(&[1.0]), vec![0.4, 0.6]);
    }

    #[test]
    fn min_leaf_is_respected() {
        let ds = Dataset::from_rows(
            (0..10).map(|i| vec![i as f64 / 10.0]).collect(),
            vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1],
            2,
        )
        .unwrap();
        let t = DecisionTree::fit(
            &ds,
            &TreeParams {
                max_depth: None,
                min_leaf: 3,
            },
        );
        for node in &t.nodes {
            if let Node::Leaf { counts } = node {
                assert!(counts.iter().sum::<usize>() >= 3);
            }
        }
    }
}
