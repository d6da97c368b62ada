//! CART regression tree with a variance-reduction criterion.

use rand::seq::index::sample;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn per split; `>= n_features` means all, in order.
    pub max_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl RegressionTree {
    /// Grows a tree on `rows` (indices into `x`/`y`, repeats allowed for
    /// bootstrap samples).
    pub fn fit<R: Rng + ?Sized>(
        params: TreeParams,
        x: &[Vec<f64>],
        y: &[f64],
        rows: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        let mut rows = rows.to_vec();
        tree.grow(params, x, y, &mut rows, 0, rng);
        tree
    }

    fn grow<R: Rng + ?Sized>(
        &mut self,
        params: TreeParams,
        x: &[Vec<f64>],
        y: &[f64],
        rows: &mut [usize],
        depth: usize,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| y[r]).sum();
        let value = sum / n as f64;
        self.nodes.push(Node::Leaf(value));

        let pure = rows.iter().all(|&r| y[r] == y[rows[0]]);
        if depth >= params.max_depth || n < 2 * params.min_leaf || pure {
            return id;
        }
        let Some(best) = best_split(params, x, y, rows, sum, rng) else {
            return id;
        };

        let mid = partition(rows, |r| x[r][best.feature] <= best.threshold);
        let (lo, hi) = rows.split_at_mut(mid);
        let left = self.grow(params, x, y, lo, depth + 1, rng);
        let right = self.grow(params, x, y, hi, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    pub fn predict_one(&self, q: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if q[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Stable in-place partition; returns the size of the `true` block.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| pred(r));
    let mid = yes.len();
    rows[..mid].copy_from_slice(&yes);
    rows[mid..].copy_from_slice(&no);
    mid
}

/// Exhaustive threshold search over midpoints of sorted distinct values.
/// Maximizes `S_l^2 / n_l + S_r^2 / n_r`, equivalent to minimizing the
/// children's summed squared error.
fn best_split<R: Rng + ?Sized>(
    params: TreeParams,
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    total: f64,
    rng: &mut R,
) -> Option<Best> {
    let n = rows.len();
    let n_features = x[rows[0]].len();
    let features: Vec<usize> = if params.max_features >= n_features {
        (0..n_features).collect()
    } else {
        sample(rng, n_features, params.max_features.max(1)).into_vec()
    };

    let parent = total * total / n as f64;
    let mut best: Option<Best> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for f in features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x[r][f], y[r])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += pairs[i].1;
            let n_left = i + 1;
            if n_left < params.min_leaf || n - n_left < params.min_leaf {
                continue;
            }
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64;
            if score > parent && best.as_ref().is_none_or(|b| score > b.score) {
                let (a, b) = (pairs[i].0, pairs[i + 1].0);
                let mut threshold = 0.5 * (a + b);
                if threshold >= b {
                    threshold = a;
                }
                best = Some(Best {
                    feature: f,
                    threshold,
                    score,
                });
            }
        }
    }
    best
}
