//! Depth-limited regression trees grown level by level with exact greedy
//! variance-reduction splits over presorted feature columns.
//!
//! Thresholds are observed feature values (the largest value sent left), so
//! a tree's row partition depends only on each feature's ordering.

use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

impl RegressionTree {
    /// Index of the leaf `row` lands in; rows with `x ≤ threshold` go left.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[i]
        {
            i = if row[feature] <= threshold { left } else { right };
        }
        i
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Feature columns with their row orderings, computed once per training set.
pub(crate) struct Presorted {
    /// Per feature: (row, value) in ascending value order, ties by row.
    pub sorted: Vec<Vec<(u32, f64)>>,
    pub cols: Vec<Vec<f64>>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Presorted {
        let cols: Vec<Vec<f64>> = (0..x.n_cols).map(|j| x.column(j)).collect();
        let sorted = cols
            .iter()
            .map(|c| {
                let mut s: Vec<(u32, f64)> = c.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect();
                s.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                s
            })
            .collect();
        Presorted { sorted, cols }
    }
}

const NO_SLOT: u32 = u32::MAX;

#[derive(Clone, Copy, Default)]
struct Stats {
    sum: f64,
    sum_sq: f64,
    n: usize,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grows one tree. Split structure is chosen from the rows where
/// `in_bag` is set; leaf values are the mean target over every row routed to
/// the leaf. Returns the tree and each row's leaf index.
pub(crate) fn fit_tree(data: &Presorted, target: &[f64], in_bag: &[bool], max_depth: usize) -> (RegressionTree, Vec<u32>) {
    let n = target.len();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut node_of = vec![0u32; n];
    let mut frontier: Vec<usize> = vec![0];
    let mut slot_of: Vec<u32> = vec![0];

    for _depth in 0..max_depth {
        if frontier.is_empty() {
            break;
        }
        let m = frontier.len();
        let mut totals = vec![Stats::default(); m];
        for i in 0..n {
            if in_bag[i] {
                let s = slot_of[node_of[i] as usize];
                if s != NO_SLOT {
                    let t = &mut totals[s as usize];
                    t.sum += target[i];
                    t.sum_sq += target[i] * target[i];
                    t.n += 1;
                }
            }
        }
        let mut best: Vec<Option<Best>> = vec![None; m];
        let mut left = vec![(0.0f64, 0usize, f64::NAN); m];
        for (f, sorted) in data.sorted.iter().enumerate() {
            left.iter_mut().for_each(|l| *l = (0.0, 0, f64::NAN));
            for &(row, v) in sorted {
                let row = row as usize;
                if !in_bag[row] {
                    continue;
                }
                let s = slot_of[node_of[row] as usize];
                if s == NO_SLOT {
                    continue;
                }
                let s = s as usize;
                let (sum_l, n_l, last) = left[s];
                if n_l > 0 && v > last {
                    let tot = totals[s];
                    let n_r = tot.n - n_l;
                    let sum_r = tot.sum - sum_l;
                    let gain = sum_l * sum_l / n_l as f64 + sum_r * sum_r / n_r as f64 - tot.sum * tot.sum / tot.n as f64;
                    if best[s].is_none_or(|b| gain > b.gain) {
                        best[s] = Some(Best {
                            gain,
                            feature: f,
                            threshold: last,
                        });
                    }
                }
                left[s] = (sum_l + target[row], n_l + 1, v);
            }
        }

        let mut next = Vec::new();
        let mut remap: Vec<(u32, u32)> = vec![(u32::MAX, u32::MAX); m];
        for (s, &node) in frontier.iter().enumerate() {
            let Some(b) = best[s] else { continue };
            // Reject splits whose gain is rounding noise.
            if !(b.gain > 1e-12 * totals[s].sum_sq) {
                continue;
            }
            let l = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[node] = Node::Split {
                feature: b.feature,
                threshold: b.threshold,
                left: l,
                right: l + 1,
            };
            remap[s] = (l as u32, l as u32 + 1);
            next.push(l);
            next.push(l + 1);
        }
        for i in 0..n {
            let s = slot_of[node_of[i] as usize];
            if s == NO_SLOT || remap[s as usize].0 == u32::MAX {
                continue;
            }
            let Node::Split { feature, threshold, .. } = nodes[node_of[i] as usize] else {
                unreachable!()
            };
            let (l, r) = remap[s as usize];
            node_of[i] = if data.cols[feature][i] <= threshold { l } else { r };
        }
        slot_of = vec![NO_SLOT; nodes.len()];
        for (s, &node) in next.iter().enumerate() {
            slot_of[node] = s as u32;
        }
        frontier = next;
    }

    let mut sums = vec![(0.0f64, 0usize); nodes.len()];
    for i in 0..n {
        let e = &mut sums[node_of[i] as usize];
        e.0 += target[i];
        e.1 += 1;
    }
    for (i, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { value } = node {
            let (s, c) = sums[i];
            *value = if c > 0 { s / c as f64 } else { 0.0 };
        }
    }
    (RegressionTree { nodes, max_depth }, node_of)
}
