//! Binary decision trees grown on binned features.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BinnedMatrix;

/// Splits must improve the node score by more than this.
pub(crate) const MIN_SPLIT_GAIN: f64 = 1e-12;
/// Nodes at least this large evaluate candidate features in parallel.
const PARALLEL_NODE_ROWS: usize = 8192;

/// Flattened tree. Node 0 is the root; `feature[i] < 0` marks a leaf. Rows with
/// `x[feature] <= threshold` go to `left`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            feature: vec![-1],
            threshold: vec![0.0],
            left: vec![0],
            right: vec![0],
            value: vec![value],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.value.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.feature.iter().filter(|&&f| f < 0).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            if t.feature[i] < 0 {
                0
            } else {
                1 + go(t, t.left[i] as usize).max(go(t, t.right[i] as usize))
            }
        }
        go(self, 0)
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let f = self.feature[i];
            if f < 0 {
                return self.value[i];
            }
            i = if row[f as usize] <= self.threshold[i] {
                self.left[i]
            } else {
                self.right[i]
            } as usize;
        }
    }

    fn push_leaf(&mut self, value: f64) -> usize {
        self.feature.push(-1);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.value.len() - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Criterion {
    /// Class-1 fraction in leaves, Gini impurity for splits.
    Gini,
    /// Newton-step leaves `Σg / Σh`, squared-error reduction of `g` for splits.
    Variance,
}

/// Additive node statistics: total weight, weighted target, weighted hessian.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Stats {
    pub w: f64,
    pub s1: f64,
    pub s2: f64,
}

impl Stats {
    fn add(&mut self, o: &Stats) {
        self.w += o.w;
        self.s1 += o.s1;
        self.s2 += o.s2;
    }

    fn minus(&self, o: &Stats) -> Stats {
        Stats {
            w: self.w - o.w,
            s1: self.s1 - o.s1,
            s2: self.s2 - o.s2,
        }
    }
}

impl Criterion {
    /// Node score; a split's gain is `score(left) + score(right) - score(parent)`.
    fn score(self, s: &Stats) -> f64 {
        if s.w <= 0.0 {
            return 0.0;
        }
        match self {
            Criterion::Gini => -2.0 * s.s1 * (s.w - s.s1) / s.w,
            Criterion::Variance => s.s1 * s.s1 / s.w,
        }
    }

    fn leaf_value(self, s: &Stats) -> f64 {
        match self {
            Criterion::Gini => {
                if s.w > 0.0 {
                    (s.s1 / s.w).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
            Criterion::Variance => {
                if s.s2.abs() > 1e-150 {
                    s.s1 / s.s2
                } else {
                    0.0
                }
            }
        }
    }

    fn is_pure(self, s: &Stats) -> bool {
        match self {
            Criterion::Gini => s.s1 <= 0.0 || s.s1 >= s.w,
            Criterion::Variance => false,
        }
    }
}

pub(crate) struct GrowParams {
    pub criterion: Criterion,
    pub max_depth: usize,
    /// Minimum total weight in each child.
    pub min_leaf: f64,
    /// Non-constant features to examine per split.
    pub n_candidates: usize,
}

#[derive(Clone, Copy, Debug)]
struct Split {
    feature: usize,
    bin: usize,
    gain: f64,
}

struct Grower<'a> {
    bins: &'a BinnedMatrix,
    stats: &'a [Stats],
    params: &'a GrowParams,
    rng: &'a mut ChaCha8Rng,
    tree: Tree,
    order: Vec<usize>,
}

/// Grows one tree over `rows` (indices into `bins`), with per-row statistics
/// `stats`. `rows` is reordered in place.
pub(crate) fn grow(
    bins: &BinnedMatrix,
    rows: &mut [u32],
    stats: &[Stats],
    params: &GrowParams,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let mut g = Grower {
        bins,
        stats,
        params,
        rng,
        tree: Tree {
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            value: Vec::new(),
        },
        order: (0..bins.n_cols()).collect(),
    };
    g.node(rows, 0);
    g.tree
}

impl Grower<'_> {
    fn node(&mut self, rows: &mut [u32], depth: usize) -> usize {
        let mut total = Stats::default();
        for &r in rows.iter() {
            total.add(&self.stats[r as usize]);
        }
        let crit = self.params.criterion;
        let id = self.tree.push_leaf(crit.leaf_value(&total));
        if depth >= self.params.max_depth
            || total.w < 2.0 * self.params.min_leaf
            || crit.is_pure(&total)
        {
            return id;
        }
        let Some(split) = self.best_split(rows, &total) else {
            return id;
        };
        let col = self.bins.column(split.feature);
        let mut lo = 0;
        let mut hi = rows.len();
        while lo < hi {
            if (col[rows[lo] as usize] as usize) <= split.bin {
                lo += 1;
            } else {
                hi -= 1;
                rows.swap(lo, hi);
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(lo);
        self.tree.feature[id] = split.feature as i32;
        self.tree.threshold[id] = self.bins.threshold(split.feature, split.bin);
        let l = self.node(left_rows, depth + 1);
        let r = self.node(right_rows, depth + 1);
        self.tree.left[id] = l as u32;
        self.tree.right[id] = r as u32;
        id
    }

    /// Draws features without replacement until `n_candidates` non-constant ones
    /// were examined or all features are used up. Ties go to the lowest feature,
    /// then the lowest threshold.
    fn best_split(&mut self, rows: &[u32], total: &Stats) -> Option<Split> {
        let p = self.order.len();
        let mut drawn = 0;
        let mut informative = 0;
        let mut results: Vec<(usize, Option<Split>)> = Vec::new();
        while informative < self.params.n_candidates && drawn < p {
            let want = (self.params.n_candidates - informative).min(p - drawn);
            for k in drawn..drawn + want {
                let pick = self.rng.random_range(k..p);
                self.order.swap(k, pick);
            }
            let batch = &self.order[drawn..drawn + want];
            drawn += want;
            let eval = |&j: &usize| (j, self.feature_split(j, rows, total));
            let found: Vec<(usize, Option<Option<Split>>)> =
                if rows.len() >= PARALLEL_NODE_ROWS && batch.len() > 1 {
                    batch.par_iter().map(eval).collect()
                } else {
                    batch.iter().map(eval).collect()
                };
            for (j, r) in found {
                if let Some(s) = r {
                    informative += 1;
                    results.push((j, s));
                }
            }
        }
        results.sort_by_key(|(j, _)| *j);
        let mut best: Option<Split> = None;
        for s in results.into_iter().filter_map(|(_, s)| s) {
            if s.gain > best.map_or(MIN_SPLIT_GAIN, |b| b.gain) {
                best = Some(s);
            }
        }
        best
    }

    /// `None` when the feature is constant within the node, otherwise the best
    /// admissible split on it (if any).
    fn feature_split(&self, j: usize, rows: &[u32], total: &Stats) -> Option<Option<Split>> {
        let col = self.bins.column(j);
        let mut hist = vec![Stats::default(); self.bins.n_bins(j)];
        for &r in rows {
            hist[col[r as usize] as usize].add(&self.stats[r as usize]);
        }
        let occupied = hist.iter().filter(|h| h.w > 0.0).count();
        if occupied < 2 {
            return None;
        }
        let crit = self.params.criterion;
        let parent = crit.score(total);
        let min_leaf = self.params.min_leaf;
        let mut left = Stats::default();
        let mut best: Option<Split> = None;
        for (b, h) in hist.iter().enumerate().take(hist.len() - 1) {
            if h.w <= 0.0 {
                continue;
            }
            left.add(h);
            let right = total.minus(&left);
            if left.w < min_leaf {
                continue;
            }
            if right.w < min_leaf || right.w <= 0.0 {
                break;
            }
            let gain = crit.score(&left) + crit.score(&right) - parent;
            if gain > best.map_or(f64::NEG_INFINITY, |s| s.gain) {
                best = Some(Split {
                    feature: j,
                    bin: b,
                    gain,
                });
            }
        }
        Some(best)
    }
}
