//! Binary decision trees: the node type shared with the booster, Gini CART
//! and a bagged random forest.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Learner, Model};
use crate::linear::check_xy;

/// Gradient/hessian sums recorded at a boosted split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub g_left: f64,
    pub h_left: f64,
    pub g_right: f64,
    pub h_right: f64,
    pub g_missing: f64,
    pub h_missing: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        feature: usize,
        /// Rows with `x < threshold` go left.
        threshold: f64,
        /// Where NaN values go.
        default_left: bool,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stats: Option<NodeStats>,
    },
}

impl TreeNode {
    pub fn leaf_for(&self, x: ArrayView1<'_, f64>) -> &TreeNode {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { .. } => return node,
                TreeNode::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let v = x[*feature];
                    let go_left = if v.is_nan() { *default_left } else { v < *threshold };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self.leaf_for(x) {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Visits internal nodes in pre-order.
    pub fn for_each_split(&self, f: &mut impl FnMut(&TreeNode)) {
        if let TreeNode::Split { left, right, .. } = self {
            f(self);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` uses all of them.
    pub m_features: Option<usize>,
}

impl Default for CartConfig {
    fn default() -> Self {
        CartConfig {
            max_depth: 10,
            min_samples_leaf: 1,
            m_features: None,
        }
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct CartBuilder<'a, R: Rng> {
    x: ArrayView2<'a, f64>,
    y: &'a [bool],
    cfg: &'a CartConfig,
    rng: &'a mut R,
}

impl<R: Rng> CartBuilder<'_, R> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> TreeNode {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| self.y[r]).count();
        let leaf = TreeNode::Leaf {
            value: pos as f64 / n as f64,
            n,
        };
        if depth >= self.cfg.max_depth || pos == 0 || pos == n || n < 2 * self.cfg.min_samples_leaf {
            return leaf;
        }
        let p = self.x.ncols();
        let mut features: Vec<usize> = match self.cfg.m_features {
            Some(m) if m < p => sample(self.rng, p, m).into_vec(),
            _ => (0..p).collect(),
        };
        features.sort_unstable();

        let parent = gini(pos, n) * n as f64;
        // (gain, feature, threshold)
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(n);
        for &f in &features {
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.x[[r, f]], self.y[r])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for i in 1..n {
                left_pos += pairs[i - 1].1 as usize;
                if pairs[i].0 == pairs[i - 1].0 || i < self.cfg.min_samples_leaf || n - i < self.cfg.min_samples_leaf {
                    continue;
                }
                let child = gini(left_pos, i) * i as f64 + gini(pos - left_pos, n - i) * (n - i) as f64;
                let gain = (parent - child) / n as f64;
                let thr = 0.5 * (pairs[i - 1].0 + pairs[i].0);
                if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return leaf;
        };
        let mid = partition(rows, |r| self.x[[r, feature]] < threshold);
        let (l, r) = rows.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        TreeNode::Split {
            feature,
            threshold,
            default_left: false,
            left: Box::new(left),
            right: Box::new(right),
            stats: None,
        }
    }
}

/// Stable in-place partition; returns the count of rows satisfying `pred`.
pub(crate) fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| pred(r));
    let k = yes.len();
    rows[..k].copy_from_slice(&yes);
    rows[k..].copy_from_slice(&no);
    k
}

/// Greedy Gini tree on the given rows. Leaves hold the positive fraction.
pub fn fit_cart_rows<R: Rng>(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    rows: &[usize],
    cfg: &CartConfig,
    rng: &mut R,
) -> Result<TreeNode> {
    if rows.is_empty() {
        return Err(Error::Validation("cannot grow a tree on an empty node".into()));
    }
    if cfg.min_samples_leaf == 0 {
        return Err(Error::Validation("min_samples_leaf must be at least 1".into()));
    }
    let mut rows = rows.to_vec();
    let mut b = CartBuilder { x, y, cfg, rng };
    Ok(b.grow(&mut rows, 0))
}

pub fn fit_cart(x: ArrayView2<'_, f64>, y: &[bool], cfg: &CartConfig, seed: u64) -> Result<TreeNode> {
    check_xy(x, y)?;
    let rows: Vec<usize> = (0..y.len()).collect();
    fit_cart_rows(x, y, &rows, cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features per split; `None` uses ⌊√p⌋.
    pub m_features: Option<usize>,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            m_features: None,
            max_depth: 10,
            min_samples_leaf: 1,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
}

impl Model for Forest {
    fn score(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Tree `i` is grown from `seed + i`, so a forest's first k trees do not
/// depend on how many follow.
pub fn fit_random_forest(x: ArrayView2<'_, f64>, y: &[bool], cfg: &ForestConfig) -> Result<Forest> {
    check_xy(x, y)?;
    let p = x.ncols();
    if cfg.n_trees == 0 {
        return Err(Error::Validation("forest needs at least one tree".into()));
    }
    let m = cfg.m_features.unwrap_or(((p as f64).sqrt() as usize).max(1));
    if m == 0 || m > p {
        return Err(Error::Validation(format!("m_features = {m} with {p} features")));
    }
    let cart = CartConfig {
        max_depth: cfg.max_depth,
        min_samples_leaf: cfg.min_samples_leaf,
        m_features: Some(m),
    };
    let n = y.len();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_cart_rows(x, y, &rows, &cart, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest { trees })
}

/// Random forest as a CV learner; the fit seed replaces `cfg.seed`.
#[derive(Debug, Clone)]
pub struct RandomForest(pub ForestConfig);

impl Learner for RandomForest {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], seed: u64) -> Result<Box<dyn Model>> {
        let cfg = ForestConfig { seed, ..self.0.clone() };
        Ok(Box::new(fit_random_forest(x, y, &cfg)?))
    }
}
