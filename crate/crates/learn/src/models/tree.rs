//! CART regression tree on presorted feature columns.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    /// Nodes holding fewer (weighted) samples than this become leaves.
    pub min_split: usize,
    /// Non-constant features examined per node.
    pub mtry: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    w: &'a [u32],
    params: TreeParams,
    /// Per feature: in-bag sample indices; every node owns the same range in each.
    sorted: Vec<Vec<usize>>,
    goes_left: Vec<bool>,
    scratch: Vec<usize>,
    features: Vec<usize>,
}

impl Tree {
    /// Grows a tree on column-major `columns` (`columns[j][i]`). `weights`
    /// holds each sample's multiplicity; zero-weight samples are out of bag.
    pub fn fit(
        columns: &[Vec<f64>],
        y: &[f64],
        weights: &[u32],
        params: TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        if columns.is_empty() {
            let wsum: f64 = weights.iter().map(|&w| f64::from(w)).sum();
            let sum: f64 = weights.iter().zip(y).map(|(&w, v)| f64::from(w) * v).sum();
            return Tree {
                nodes: vec![Node::Leaf { value: sum / wsum }],
            };
        }
        let in_bag: Vec<usize> = (0..y.len()).filter(|&i| weights[i] > 0).collect();
        let sorted = columns
            .iter()
            .map(|col| {
                let mut idx = in_bag.clone();
                idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let mut b = Builder {
            columns,
            y,
            w: weights,
            params,
            sorted,
            goes_left: vec![false; y.len()],
            scratch: Vec::with_capacity(in_bag.len()),
            features: (0..columns.len()).collect(),
        };
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stack = vec![(0usize, 0usize, in_bag.len())];
        while let Some((id, start, end)) = stack.pop() {
            let (wsum, sum, constant) = b.node_stats(start, end);
            let value = if wsum > 0.0 { sum / wsum } else { 0.0 };
            if constant || (wsum as usize) < params.min_split {
                nodes[id] = Node::Leaf { value };
                continue;
            }
            match b.best_split(start, end, wsum, sum, rng) {
                Some(c) => {
                    let n_left = b.partition(start, end, c.feature, c.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[id] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, start + n_left, end));
                    stack.push((left, start, start + n_left));
                }
                None => nodes[id] = Node::Leaf { value },
            }
        }
        Tree { nodes }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Feature and threshold of the root split, if the root was split.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

impl Builder<'_> {
    fn node_stats(&self, start: usize, end: usize) -> (f64, f64, bool) {
        let idx = &self.sorted[0][start..end];
        let first = idx.first().map(|&i| self.y[i]);
        let mut wsum = 0.0;
        let mut sum = 0.0;
        let mut constant = true;
        for &i in idx {
            let w = f64::from(self.w[i]);
            wsum += w;
            sum += w * self.y[i];
            constant &= Some(self.y[i]) == first;
        }
        (wsum, sum, constant)
    }

    fn best_split(
        &mut self,
        start: usize,
        end: usize,
        wsum: f64,
        sum: f64,
        rng: &mut ChaCha8Rng,
    ) -> Option<Candidate> {
        self.features.shuffle(rng);
        let parent = sum * sum / wsum;
        let mut best: Option<Candidate> = None;
        let mut examined = 0;
        for fi in 0..self.features.len() {
            if examined == self.params.mtry {
                break;
            }
            let j = self.features[fi];
            let col = &self.columns[j];
            let idx = &self.sorted[j][start..end];
            if col[idx[0]] == col[idx[idx.len() - 1]] {
                continue;
            }
            examined += 1;
            let (mut wl, mut sl) = (0.0, 0.0);
            for k in 0..idx.len() - 1 {
                let i = idx[k];
                let w = f64::from(self.w[i]);
                wl += w;
                sl += w * self.y[i];
                let (a, b) = (col[i], col[idx[k + 1]]);
                if a == b {
                    continue;
                }
                let (wr, sr) = (wsum - wl, sum - sl);
                let score = sl * sl / wl + sr * sr / wr;
                if best.is_none_or(|c| score > c.score) {
                    let mid = 0.5 * (a + b);
                    best = Some(Candidate {
                        feature: j,
                        threshold: if mid < b { mid } else { a },
                        score,
                    });
                }
            }
        }
        best.filter(|c| c.score - parent > 0.0)
    }

    /// Stable partition of every feature's range; returns the left size.
    fn partition(&mut self, start: usize, end: usize, feature: usize, threshold: f64) -> usize {
        let col = &self.columns[feature];
        let mut n_left = 0;
        for &i in &self.sorted[feature][start..end] {
            let l = col[i] <= threshold;
            self.goes_left[i] = l;
            n_left += usize::from(l);
        }
        for list in &mut self.sorted {
            let range = &mut list[start..end];
            self.scratch.clear();
            let mut write = 0;
            for r in 0..range.len() {
                let i = range[r];
                if self.goes_left[i] {
                    range[write] = i;
                    write += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            range[write..].copy_from_slice(&self.scratch);
        }
        n_left
    }
}

/// Converts row-major data to the column-major layout the tree expects.
pub fn to_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = rows.first().map_or(0, Vec::len);
    (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}
