//! CART regression trees with exhaustive midpoint splits.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Regressor, Samples};

/// Minimum SSE reduction for a split to count as an improvement; also the
/// tolerance under which two candidate splits are treated as tied.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        count: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    min_leaf: usize,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn min_leaf(&self) -> usize {
        self.min_leaf
    }

    /// `(feature, threshold)` of the root split, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, count } => Some((value, count)),
            Node::Split { .. } => None,
        })
    }
}

impl Regressor for RegressionTree {
    fn predict(&self, x: &[f64]) -> f64 {
        RegressionTree::predict(self, x)
    }
}

/// Per-split feature sampling for random forests.
pub(crate) struct FeatureSampler<'a, R: Rng> {
    pub rng: &'a mut R,
    pub n_features: usize,
}

pub fn fit_tree(samples: &Samples, min_leaf: usize) -> RegressionTree {
    let rows: Vec<usize> = (0..samples.len()).collect();
    grow::<rand_chacha::ChaCha8Rng>(samples, &rows, &samples.y, min_leaf, None)
}

/// Grows a tree on `rows` (duplicates allowed) against `targets`, which is
/// indexed like `samples`.
pub(crate) fn grow<R: Rng>(
    samples: &Samples,
    rows: &[usize],
    targets: &[f64],
    min_leaf: usize,
    mut sampler: Option<FeatureSampler<'_, R>>,
) -> RegressionTree {
    assert!(!rows.is_empty(), "cannot grow a tree on no rows");
    let min_leaf = min_leaf.max(1);
    let mut nodes = Vec::new();
    // (node slot, rows)
    let mut stack = vec![(0usize, rows.to_vec())];
    nodes.push(Node::Leaf { value: 0.0, count: 0 });
    while let Some((slot, idx)) = stack.pop() {
        let features: Vec<usize> = match sampler.as_mut() {
            Some(s) if s.n_features < samples.dim() => {
                let mut f = sample(s.rng, samples.dim(), s.n_features).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..samples.dim()).collect(),
        };
        match best_split(samples, &idx, targets, min_leaf, &features) {
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| samples.x[i][feature] <= threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                // right first so the left subtree is expanded first
                stack.push((right, r));
                stack.push((left, l));
            }
            None => {
                let value = idx.iter().map(|&i| targets[i]).sum::<f64>() / idx.len() as f64;
                nodes[slot] = Node::Leaf {
                    value,
                    count: idx.len(),
                };
            }
        }
    }
    RegressionTree { nodes, min_leaf }
}

/// Best `(feature, threshold)` by total within-child squared error, or `None`
/// when no admissible split improves on the parent.
fn best_split(
    samples: &Samples,
    idx: &[usize],
    targets: &[f64],
    min_leaf: usize,
    features: &[usize],
) -> Option<(usize, f64)> {
    let m = idx.len();
    if m < 2 * min_leaf {
        return None;
    }
    let total: f64 = idx.iter().map(|&i| targets[i]).sum();
    let total_sq: f64 = idx.iter().map(|&i| targets[i] * targets[i]).sum();
    let parent_sse = (total_sq - total * total / m as f64).max(0.0);
    let mut best: Option<(usize, f64, f64)> = None;
    let mut order = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| samples.x[a][f].total_cmp(&samples.x[b][f]));
        let mut s = 0.0;
        let mut sq = 0.0;
        for k in 1..m {
            let y = targets[order[k - 1]];
            s += y;
            sq += y * y;
            let lo = samples.x[order[k - 1]][f];
            let hi = samples.x[order[k]][f];
            if k < min_leaf || m - k < min_leaf || lo == hi {
                continue;
            }
            let (nl, nr) = (k as f64, (m - k) as f64);
            let sse_l = sq - s * s / nl;
            let sse_r = (total_sq - sq) - (total - s) * (total - s) / nr;
            let sse = sse_l + sse_r;
            let threshold = 0.5 * (lo + hi);
            let tol = GAIN_EPS * (1.0 + parent_sse);
            if sse < parent_sse - tol && best.is_none_or(|(_, _, b)| sse < b - tol) {
                best = Some((f, threshold, sse));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(x: Vec<[f64; 2]>, y: Vec<f64>) -> Samples {
        Samples::new(x.into_iter().map(|r| r.to_vec()).collect(), y)
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let s = samples(vec![[0.0, 0.0], [0.5, 1.0], [1.0, 0.3]], vec![2.0; 3]);
        let t = fit_tree(&s, 1);
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict(&[0.7, 0.7]), 2.0);
    }

    #[test]
    fn pure_leaves_reproduce_targets() {
        let s = samples(
            vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]],
            vec![1.0, 4.0, 2.0, 8.0],
        );
        let t = fit_tree(&s, 1);
        for (x, y) in s.x.iter().zip(&s.y) {
            assert_eq!(t.predict(x), *y);
        }
    }

    #[test]
    fn leaves_respect_min_leaf() {
        let x: Vec<[f64; 2]> = (0..20).map(|i| [i as f64 / 19.0, ((i * 7) % 20) as f64 / 19.0]).collect();
        let y: Vec<f64> = (0..20).map(|i| ((i * 13) % 17) as f64).collect();
        let s = samples(x, y);
        for min_leaf in 1..=6 {
            let t = fit_tree(&s, min_leaf);
            assert!(t.leaves().all(|(_, c)| c >= min_leaf));
        }
    }

    /// Exhaustive oracle: every feature, every midpoint, SSE computed
    /// directly, first strict minimum wins.
    fn oracle_root(x: &[[f64; 2]], y: &[f64], min_leaf: usize) -> Option<(usize, f64)> {
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
        };
        let parent = sse(y);
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..2 {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let l: Vec<f64> = (0..y.len()).filter(|&i| x[i][f] <= t).map(|i| y[i]).collect();
                let r: Vec<f64> = (0..y.len()).filter(|&i| x[i][f] > t).map(|i| y[i]).collect();
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                let s = sse(&l) + sse(&r);
                if s < parent - 1e-12 && best.is_none_or(|(_, _, b)| s < b - 1e-12) {
                    best = Some((f, t, s));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    #[test]
    fn root_split_matches_exhaustive_oracle() {
        let cases: Vec<(Vec<[f64; 2]>, Vec<f64>)> = vec![
            (
                vec![[0.0, 0.2], [0.2, 0.8], [0.4, 0.4], [0.6, 0.0], [0.8, 1.0], [1.0, 0.6]],
                vec![1.0, 5.0, 2.0, 1.5, 6.0, 4.0],
            ),
            (
                vec![[0.0, 0.0], [0.0, 0.5], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [1.0, 0.0]],
                vec![0.3, 0.9, 1.1, 0.35, 0.95, 0.4],
            ),
            (
                vec![[0.1, 0.9], [0.3, 0.7], [0.5, 0.5], [0.7, 0.3], [0.9, 0.1], [0.2, 0.2]],
                vec![3.0, 3.2, 7.0, 7.1, 7.3, 2.9],
            ),
        ];
        for (x, y) in cases {
            for min_leaf in 1..=3 {
                let t = fit_tree(&samples(x.clone(), y.clone()), min_leaf);
                assert_eq!(t.root_split(), oracle_root(&x, &y, min_leaf), "min_leaf {min_leaf}");
            }
        }
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // both features separate the targets identically
        let s = samples(vec![[0.0, 0.0], [1.0, 1.0]], vec![0.0, 1.0]);
        assert_eq!(fit_tree(&s, 1).root_split(), Some((0, 0.5)));
    }
}
