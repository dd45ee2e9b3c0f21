//! Random-forest regression over mixed categorical/real feature vectors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::exec::Exec;
use crate::seed::derive;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestSettings {
    pub n_trees: usize,
    /// Features examined per split; `0` means `ceil(sqrt(d))`.
    pub max_features: usize,
    /// Nodes with at most this many samples become leaves.
    pub min_leaf: usize,
    /// Bootstrap sample size relative to the archive.
    pub bootstrap_ratio: f64,
}

impl Default for ForestSettings {
    fn default() -> Self {
        Self { n_trees: 50, max_features: 0, min_leaf: 3, bootstrap_ratio: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Split {
    /// Left branch takes samples equal to the category.
    Equals(f64),
    /// Left branch takes samples at or below the threshold.
    AtMost(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { mean: f64, count: usize },
    Branch { feature: usize, split: Split, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { mean, .. } => return *mean,
                Node::Branch { feature, split, left, right } => {
                    let v = x[*feature];
                    let goes_left = match split {
                        Split::Equals(c) => v == *c,
                        Split::AtMost(t) => v <= *t,
                    };
                    at = if goes_left { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub tree_seeds: Vec<u64>,
}

impl ForestModel {
    /// Mean over trees and the standard deviation across trees.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, t) in self.trees.iter().enumerate() {
            let p = t.predict(x);
            let delta = p - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (p - mean);
        }
        (mean, (m2 / self.trees.len() as f64).max(0.0).sqrt())
    }

    pub fn tree_predictions(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }
}

/// Fit a bagged forest. `categorical[j]` marks feature `j` as categorical.
pub fn fit_forest(
    xs: &[Vec<f64>],
    ys: &[f64],
    categorical: &[bool],
    settings: &ForestSettings,
    seed: u64,
    exec: Exec,
) -> Result<ForestModel> {
    if xs.len() != ys.len() {
        return Err(contract("forest: feature and target counts differ"));
    }
    if xs.len() < 2 {
        return Err(contract(format!("forest needs at least 2 archive points, got {}", xs.len())));
    }
    let d = categorical.len();
    if xs.iter().any(|x| x.len() != d) {
        return Err(contract("forest: feature vectors must match the categorical mask"));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(contract("forest: targets must be finite"));
    }
    if d > 64 {
        return Err(contract("forest supports at most 64 features"));
    }
    if settings.n_trees == 0 {
        return Err(contract("forest needs at least one tree"));
    }
    let max_features = if settings.max_features == 0 {
        (d as f64).sqrt().ceil() as usize
    } else {
        settings.max_features.min(d)
    };
    let sample_size = ((xs.len() as f64 * settings.bootstrap_ratio).round() as usize).max(1);
    let tree_seeds: Vec<u64> = (0..settings.n_trees).map(|t| derive(seed, &[t as u64])).collect();
    let columns: Vec<Vec<f64>> = (0..d).map(|f| xs.iter().map(|x| x[f]).collect()).collect();
    let mut codes: Vec<Vec<u8>> = vec![Vec::new(); d];
    for f in (0..d).filter(|&f| categorical[f]) {
        if columns[f].iter().any(|&v| !(v >= 0.0 && v < MAX_CATEGORY as f64 && v.fract() == 0.0)) {
            return Err(contract(format!("forest: categorical feature {f} must hold integers below {MAX_CATEGORY}")));
        }
        codes[f] = columns[f].iter().map(|&v| v as u8).collect();
    }
    let ys_sq: Vec<f64> = ys.iter().map(|y| y * y).collect();
    let trees = exec.map(&tree_seeds, |&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let idx: Vec<usize> = (0..sample_size).map(|_| rng.random_range(0..xs.len())).collect();
        let sorted = (0..d)
            .map(|f| {
                if categorical[f] {
                    return Vec::new();
                }
                let mut order = idx.clone();
                order.sort_by(|&a, &b| columns[f][a].total_cmp(&columns[f][b]));
                order
            })
            .collect();
        let mut builder = Builder {
            columns: &columns,
            codes: &codes,
            ys,
            ys_sq: &ys_sq,
            categorical,
            max_features,
            min_leaf: settings.min_leaf,
            nodes: Vec::new(),
            idx,
            sorted,
            buffer: Vec::with_capacity(sample_size),
            left: vec![false; xs.len()],
        };
        builder.build(0, sample_size, 0, 0, &mut rng);
        Tree { nodes: builder.nodes }
    });
    Ok(ForestModel { trees, tree_seeds })
}

/// Grows one tree. Every node owns the range `lo..hi` of `idx` and of each
/// presorted real-feature order, so real splits need no sorting.
struct Builder<'a> {
    /// Feature-major copy of the archive.
    columns: &'a [Vec<f64>],
    codes: &'a [Vec<u8>],
    ys: &'a [f64],
    ys_sq: &'a [f64],
    categorical: &'a [bool],
    max_features: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
    idx: Vec<usize>,
    sorted: Vec<Vec<usize>>,
    buffer: Vec<usize>,
    /// Scratch side flags indexed by archive row.
    left: Vec<bool>,
}

const MAX_DEPTH: usize = 64;
/// Categorical features take integer values below this.
const MAX_CATEGORY: usize = 8;

impl Builder<'_> {
    /// `constant` flags features already known to be constant in this node.
    fn build(&mut self, lo: usize, hi: usize, depth: usize, constant: u64, rng: &mut ChaCha8Rng) -> usize {
        let n = hi - lo;
        let ys = self.ys;
        let node = &self.idx[lo..hi];
        let mean = node.iter().map(|&i| ys[i]).sum::<f64>() / n as f64;
        let flat = node.iter().all(|&i| ys[i] == ys[node[0]]);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { mean, count: n });
        if n <= self.min_leaf || flat || depth >= MAX_DEPTH {
            return me;
        }
        let (best, constant) = self.best_split(lo, hi, constant, rng);
        let Some((feature, split)) = best else {
            return me;
        };
        let cut = lo + self.partition(lo, hi, feature, &split);
        let left = self.build(lo, cut, depth + 1, constant, rng);
        let right = self.build(cut, hi, depth + 1, constant, rng);
        self.nodes[me] = Node::Branch { feature, split, left, right };
        me
    }

    fn goes_left(&self, i: usize, feature: usize, split: &Split) -> bool {
        let v = self.columns[feature][i];
        match split {
            Split::Equals(c) => v == *c,
            Split::AtMost(t) => v <= *t,
        }
    }

    /// Stable partition of every order in `lo..hi`; returns the left size.
    fn partition(&mut self, lo: usize, hi: usize, feature: usize, split: &Split) -> usize {
        for k in lo..hi {
            let i = self.idx[k];
            self.left[i] = self.goes_left(i, feature, split);
        }
        let left = &self.left;
        let buffer = &mut self.buffer;
        let mut cut = lo;
        for order in std::iter::once(&mut self.idx).chain(self.sorted.iter_mut().filter(|o| !o.is_empty())) {
            buffer.clear();
            let mut w = lo;
            for k in lo..hi {
                let i = order[k];
                if left[i] {
                    order[w] = i;
                    w += 1;
                } else {
                    buffer.push(i);
                }
            }
            order[w..hi].copy_from_slice(buffer);
            cut = w;
        }
        cut - lo
    }

    /// Lowest total squared error over up to `max_features` non-constant features.
    fn best_split(
        &self,
        lo: usize,
        hi: usize,
        mut constant: u64,
        rng: &mut ChaCha8Rng,
    ) -> (Option<(usize, Split)>, u64) {
        let mut order: Vec<usize> = (0..self.categorical.len()).collect();
        order.shuffle(rng);
        let mut examined = 0;
        let mut best: Option<(f64, usize, Split)> = None;
        for f in order {
            if examined == self.max_features {
                break;
            }
            if constant & (1 << f) != 0 {
                continue;
            }
            let candidate =
                if self.categorical[f] { self.categorical_split(lo, hi, f) } else { self.real_split(lo, hi, f) };
            // `None` means the feature is constant in this node
            let Some((sse, split)) = candidate else {
                constant |= 1 << f;
                continue;
            };
            examined += 1;
            if best.as_ref().is_none_or(|b| sse < b.0) {
                best = Some((sse, f, split));
            }
        }
        (best.map(|(_, f, s)| (f, s)), constant)
    }

    fn real_split(&self, lo: usize, hi: usize, f: usize) -> Option<(f64, Split)> {
        let order = &self.sorted[f][lo..hi];
        let column = &self.columns[f];
        let n = order.len();
        let total: f64 = order.iter().map(|&i| self.ys[i]).sum();
        let total_sq: f64 = order.iter().map(|&i| self.ys_sq[i]).sum();
        let (mut s, mut sq) = (0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for k in 0..n - 1 {
            s += self.ys[order[k]];
            sq += self.ys_sq[order[k]];
            let (here, next) = (column[order[k]], column[order[k + 1]]);
            if here == next {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = (n - k - 1) as f64;
            let sse = (sq - s * s / nl) + ((total_sq - sq) - (total - s).powi(2) / nr);
            if best.is_none_or(|b| sse < b.0) {
                best = Some((sse, 0.5 * (here + next)));
            }
        }
        best.map(|(sse, t)| (sse, Split::AtMost(t)))
    }

    fn categorical_split(&self, lo: usize, hi: usize, f: usize) -> Option<(f64, Split)> {
        // count, sum and sum of squares per category
        let mut groups = [(0.0f64, 0.0f64, 0.0f64); MAX_CATEGORY];
        let codes = &self.codes[f];
        for &i in &self.idx[lo..hi] {
            let g = &mut groups[usize::from(codes[i])];
            g.0 += 1.0;
            g.1 += self.ys[i];
            g.2 += self.ys_sq[i];
        }
        let present = groups.iter().filter(|g| g.0 > 0.0).count();
        if present < 2 {
            return None;
        }
        let n = (hi - lo) as f64;
        let total: f64 = groups.iter().map(|g| g.1).sum();
        let total_sq: f64 = groups.iter().map(|g| g.2).sum();
        let mut best: Option<(f64, usize)> = None;
        for (v, &(c, s, sq)) in groups.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let sse = (sq - s * s / c) + ((total_sq - sq) - (total - s).powi(2) / (n - c));
            if best.is_none_or(|b| sse < b.0) {
                best = Some((sse, v));
            }
            if present == 2 {
                break;
            }
        }
        best.map(|(sse, v)| (sse, Split::Equals(v as f64)))
    }
}
