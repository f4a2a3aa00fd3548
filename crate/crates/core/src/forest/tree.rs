//! One CART classification tree on a bootstrap sample.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Bootstrap class counts reaching the leaf.
    Leaf { onset: u32, regular: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Whether the tree votes onset for `x`; a tied leaf votes regular.
    pub fn vote(&self, x: &[f64]) -> bool {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { onset, regular } => return onset > regular,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

pub(crate) struct GrowParams {
    pub mtry: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn gini(pos: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

fn is_constant(x: &[Vec<f64>], idx: &[usize], f: usize) -> bool {
    let v = x[idx[0]][f];
    idx.iter().all(|&i| x[i][f] == v)
}

/// Grows a tree over the sample `idx` (row indices, repeats allowed).
/// Candidate features at each node are drawn from `features` among those
/// not constant on the node's samples.
pub(crate) fn grow<R: Rng>(
    x: &[Vec<f64>],
    y: &[bool],
    idx: Vec<usize>,
    features: &[usize],
    params: &GrowParams,
    rng: &mut R,
) -> Tree {
    let mut nodes = Vec::new();
    let mut stack = vec![(idx, 0usize, usize::MAX, false)];
    // (samples, depth, parent, is_right)
    while let Some((idx, depth, parent, is_right)) = stack.pop() {
        let me = nodes.len();
        if parent != usize::MAX {
            if let Node::Split { left, right, .. } = &mut nodes[parent] {
                if is_right {
                    *right = me;
                } else {
                    *left = me;
                }
            }
        }
        let pos = idx.iter().filter(|&&i| y[i]).count();
        let leaf = Node::Leaf {
            onset: pos as u32,
            regular: (idx.len() - pos) as u32,
        };
        let depth_ok = params.max_depth.is_none_or(|d| depth < d);
        if pos == 0 || pos == idx.len() || !depth_ok || idx.len() < 2 * params.min_samples_leaf {
            nodes.push(leaf);
            continue;
        }
        let live: Vec<usize> = features.iter().copied().filter(|&f| !is_constant(x, &idx, f)).collect();
        if live.is_empty() {
            nodes.push(leaf);
            continue;
        }
        let mut chosen: Vec<usize> = if live.len() <= params.mtry {
            live
        } else {
            sample(rng, live.len(), params.mtry).into_iter().map(|k| live[k]).collect()
        };
        chosen.sort_unstable();
        match best_split(x, y, &idx, pos, &chosen, params.min_samples_leaf) {
            None => nodes.push(leaf),
            Some(b) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][b.feature] <= b.threshold);
                nodes.push(Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left: usize::MAX,
                    right: usize::MAX,
                });
                stack.push((r, depth + 1, me, true));
                stack.push((l, depth + 1, me, false));
            }
        }
    }
    Tree { nodes }
}

fn best_split(
    x: &[Vec<f64>],
    y: &[bool],
    idx: &[usize],
    pos: usize,
    features: &[usize],
    min_leaf: usize,
) -> Option<Best> {
    let n = idx.len() as f64;
    let parent = gini(pos as f64, n);
    let mut best: Option<Best> = None;
    let mut order: Vec<usize> = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left_pos = 0.0;
        for k in 0..order.len() - 1 {
            if y[order[k]] {
                left_pos += 1.0;
            }
            let a = x[order[k]][f];
            let b = x[order[k + 1]][f];
            if a == b {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = n - nl;
            if (k + 1) < min_leaf || order.len() - (k + 1) < min_leaf {
                continue;
            }
            let right_pos = pos as f64 - left_pos;
            let child = (nl * gini(left_pos, nl) + nr * gini(right_pos, nr)) / n;
            let gain = parent - child;
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b || threshold < a {
                threshold = a;
            }
            // strict improvement only: earlier features and thresholds win ties
            if best.as_ref().is_none_or(|cur| gain > cur.gain) {
                best = Some(Best {
                    gain,
                    feature: f,
                    threshold,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> GrowParams {
        GrowParams {
            mtry: 2,
            max_depth: None,
            min_samples_leaf: 1,
        }
    }

    #[test]
    fn fits_xor_fully() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![false, true, true, false];
        let t = grow(&x, &y, vec![0, 1, 2, 3], &[0, 1], &params(), &mut ChaCha8Rng::seed_from_u64(1));
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(t.vote(xi), *yi);
        }
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn tie_breaks_to_lowest_feature() {
        // both features separate perfectly
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let y = vec![false, true];
        let t = grow(&x, &y, vec![0, 1], &[0, 1], &params(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(t.nodes[0], Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 });
    }

    #[test]
    fn identical_rows_make_a_leaf() {
        let x = vec![vec![1.0], vec![1.0], vec![1.0]];
        let y = vec![true, false, true];
        let t = grow(&x, &y, vec![0, 1, 2], &[0], &params(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(t.nodes, vec![Node::Leaf { onset: 2, regular: 1 }]);
    }

    #[test]
    fn threshold_between_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let x = vec![vec![a], vec![b]];
        let y = vec![false, true];
        let t = grow(&x, &y, vec![0, 1], &[0], &params(), &mut ChaCha8Rng::seed_from_u64(1));
        assert!(!t.vote(&[a]));
        assert!(t.vote(&[b]));
    }
}
