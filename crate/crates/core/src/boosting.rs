//! Gradient-boosted regression trees on the logistic loss with a second-order
//! objective, exact or weighted-quantile split finding and learned default
//! directions for missing values (NaN).

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Learner, Model};
use crate::linear::sigmoid;
use crate::trees::{partition, NodeStats, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradHess {
    pub g: f64,
    pub h: f64,
}

pub fn logistic_grad_hess(p: f64, label: bool) -> GradHess {
    GradHess {
        g: p - if label { 1.0 } else { 0.0 },
        h: p * (1.0 - p),
    }
}

pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> Result<f64> {
    if !(h + lambda > 0.0) {
        return Err(Error::Validation(format!("H + lambda = {} must be positive", h + lambda)));
    }
    Ok(-g / (h + lambda))
}

pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let g = gl + gr;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (hl + hr + lambda)) - gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Exact,
    Approx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
    pub n_rounds: usize,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub approx_epsilon: f64,
    pub split_mode: SplitMode,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            lambda: 1.0,
            gamma: 0.0,
            eta: 0.1,
            n_rounds: 200,
            max_depth: 4,
            min_child_weight: 1e-3,
            approx_epsilon: 0.05,
            split_mode: SplitMode::Exact,
            seed: 0,
        }
    }
}

impl BoostParams {
    fn validate(&self) -> Result<()> {
        let ok = self.lambda >= 0.0
            && self.gamma >= 0.0
            && (0.0..=1.0).contains(&self.eta)
            && self.min_child_weight >= 0.0
            && self.approx_epsilon > 0.0
            && self.approx_epsilon < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid boosting parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Present values `< threshold` go left.
    pub threshold: f64,
    pub gain: f64,
    pub default_left: bool,
    pub stats: NodeStats,
}

/// Weighted quantiles at ranks ε, 2ε, … below 1. The candidate for rank q is
/// the smallest value whose share of weight strictly below it is at least q.
pub fn weighted_quantile_candidates(values: &[f64], weights: &[f64], epsilon: f64) -> Vec<f64> {
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if !(total > 0.0) || pairs.len() < 2 {
        return Vec::new();
    }
    // (distinct value, weight strictly below it)
    let mut below = Vec::new();
    let mut acc = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        below.push((v, acc / total));
        while i < pairs.len() && pairs[i].0 == v {
            acc += pairs[i].1;
            i += 1;
        }
    }
    let mut out: Vec<f64> = Vec::new();
    let mut k = 1;
    let mut j = 0;
    loop {
        let q = k as f64 * epsilon;
        if q >= 1.0 {
            break;
        }
        while j < below.len() && below[j].1 < q {
            j += 1;
        }
        if j == below.len() {
            break;
        }
        if out.last() != Some(&below[j].0) {
            out.push(below[j].0);
        }
        k += 1;
    }
    out
}

/// Gradient sums of the rows where a feature is missing at a node.
struct Missing {
    g: f64,
    h: f64,
    n: usize,
}

fn sort_pairs(v: &mut [(f64, usize)]) {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
}

/// Present (value, row) pairs of one feature at a node, sorted.
fn gather_sorted(x: ArrayView2<'_, f64>, rows: &[usize], gh: &[GradHess], feature: usize) -> (Vec<(f64, usize)>, Missing) {
    let mut present: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    let mut miss = Missing { g: 0.0, h: 0.0, n: 0 };
    for &r in rows {
        let v = x[[r, feature]];
        if v.is_nan() {
            miss.g += gh[r].g;
            miss.h += gh[r].h;
            miss.n += 1;
        } else {
            present.push((v, r));
        }
    }
    sort_pairs(&mut present);
    (present, miss)
}

/// Column-major copy of the features used while growing one ensemble.
struct Columns {
    xt: Array2<f64>,
}

impl Columns {
    fn new(x: ArrayView2<'_, f64>) -> Self {
        Columns {
            xt: x.t().as_standard_layout().into_owned(),
        }
    }

    /// Present (value, row) pairs of every feature over all rows, sorted.
    fn sorted_lists(&self) -> Vec<Vec<(f64, usize)>> {
        self.xt
            .rows()
            .into_iter()
            .map(|col| {
                let mut v: Vec<(f64, usize)> = col.iter().enumerate().filter(|(_, v)| !v.is_nan()).map(|(r, &v)| (v, r)).collect();
                sort_pairs(&mut v);
                v
            })
            .collect()
    }

    fn missing(&self, present: usize, rows: &[usize], gh: &[GradHess], feature: usize) -> Missing {
        let mut miss = Missing { g: 0.0, h: 0.0, n: 0 };
        if present == rows.len() {
            return miss;
        }
        let col = self.xt.row(feature);
        for &r in rows {
            if col[r].is_nan() {
                miss.g += gh[r].g;
                miss.h += gh[r].h;
                miss.n += 1;
            }
        }
        miss
    }
}

/// Best split of one feature, trying every candidate threshold with missing
/// rows sent right and then left.
fn scan_feature(
    present: &[(f64, usize)],
    miss: Missing,
    gh: &[GradHess],
    feature: usize,
    params: &BoostParams,
    mode: SplitMode,
) -> Option<SplitCandidate> {
    if present.is_empty() {
        return None;
    }
    let total_g: f64 = present.iter().map(|p| gh[p.1].g).sum();
    let total_h: f64 = present.iter().map(|p| gh[p.1].h).sum();

    let approx: Vec<f64> = match mode {
        SplitMode::Exact => Vec::new(),
        SplitMode::Approx => {
            let vals: Vec<f64> = present.iter().map(|p| p.0).collect();
            let w: Vec<f64> = present.iter().map(|p| gh[p.1].h).collect();
            let mut c = weighted_quantile_candidates(&vals, &w, params.approx_epsilon);
            if miss.n > 0 && c.first() != Some(&vals[0]) {
                c.insert(0, vals[0]);
            }
            c
        }
    };
    // exact mode walks the distinct present values in order
    let mut next_exact = 0usize;
    let mut next_approx = approx.iter();
    let mut next_candidate = || match mode {
        SplitMode::Exact => {
            let thr = present.get(next_exact)?.0;
            while next_exact < present.len() && present[next_exact].0 == thr {
                next_exact += 1;
            }
            Some(thr)
        }
        SplitMode::Approx => next_approx.next().copied(),
    };

    let mut best: Option<SplitCandidate> = None;
    let (mut gl, mut hl) = (0.0, 0.0);
    let mut i = 0;
    while let Some(thr) = next_candidate() {
        while i < present.len() && present[i].0 < thr {
            gl += gh[present[i].1].g;
            hl += gh[present[i].1].h;
            i += 1;
        }
        let n_left = i;
        let n_right = present.len() - n_left;
        let (gr, hr) = (total_g - gl, total_h - hl);
        for default_left in [false, true] {
            let (l_g, l_h, l_n, r_g, r_h, r_n) = if default_left {
                (gl + miss.g, hl + miss.h, n_left + miss.n, gr, hr, n_right)
            } else {
                (gl, hl, n_left, gr + miss.g, hr + miss.h, n_right + miss.n)
            };
            if l_n == 0 || r_n == 0 || l_h < params.min_child_weight || r_h < params.min_child_weight {
                continue;
            }
            let gain = split_gain(l_g, l_h, r_g, r_h, params.lambda, params.gamma);
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature,
                    threshold: thr,
                    gain,
                    default_left,
                    stats: NodeStats {
                        g_left: gl,
                        h_left: hl,
                        g_right: gr,
                        h_right: hr,
                        g_missing: miss.g,
                        h_missing: miss.h,
                        gain,
                    },
                });
            }
        }
    }
    best
}

fn pick_best(per_feature: Vec<Option<SplitCandidate>>) -> Option<SplitCandidate> {
    let mut best: Option<SplitCandidate> = None;
    for c in per_feature.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| c.gain > b.gain) {
            best = Some(c);
        }
    }
    best.filter(|b| b.gain > 0.0)
}

const PAR_WORK: usize = 100_000;

fn best_split(
    x: ArrayView2<'_, f64>,
    rows: &[usize],
    gh: &[GradHess],
    params: &BoostParams,
    mode: SplitMode,
) -> Option<SplitCandidate> {
    let p = x.ncols();
    let one = |f: usize| {
        let (present, miss) = gather_sorted(x, rows, gh, f);
        scan_feature(&present, miss, gh, f, params, mode)
    };
    let per_feature: Vec<Option<SplitCandidate>> = if rows.len() * p >= PAR_WORK {
        (0..p).into_par_iter().map(one).collect()
    } else {
        (0..p).map(one).collect()
    };
    pick_best(per_feature)
}

/// `best_split` over per-feature lists already sorted for this node.
fn best_split_sorted(
    cols: &Columns,
    lists: &[Vec<(f64, usize)>],
    rows: &[usize],
    gh: &[GradHess],
    params: &BoostParams,
) -> Option<SplitCandidate> {
    let p = lists.len();
    let one = |f: usize| {
        let miss = cols.missing(lists[f].len(), rows, gh, f);
        scan_feature(&lists[f], miss, gh, f, params, params.split_mode)
    };
    let per_feature: Vec<Option<SplitCandidate>> = if rows.len() * p >= PAR_WORK {
        (0..p).into_par_iter().map(one).collect()
    } else {
        (0..p).map(one).collect()
    };
    pick_best(per_feature)
}

/// Best exact split over `rows`, or `None` when no split has positive gain.
pub fn exact_greedy_split(
    x: ArrayView2<'_, f64>,
    rows: &[usize],
    gh: &[GradHess],
    params: &BoostParams,
) -> Option<SplitCandidate> {
    best_split(x, rows, gh, params, SplitMode::Exact)
}

/// Same search restricted to weighted-quantile candidates of each feature at
/// this node.
pub fn approx_split(x: ArrayView2<'_, f64>, rows: &[usize], gh: &[GradHess], params: &BoostParams) -> Option<SplitCandidate> {
    best_split(x, rows, gh, params, SplitMode::Approx)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    x: ArrayView2<'_, f64>,
    cols: &Columns,
    lists: Vec<Vec<(f64, usize)>>,
    side: &mut [bool],
    rows: &mut [usize],
    gh: &[GradHess],
    params: &BoostParams,
    depth: usize,
) -> Result<TreeNode> {
    let g: f64 = rows.iter().map(|&r| gh[r].g).sum();
    let h: f64 = rows.iter().map(|&r| gh[r].h).sum();
    let leaf = TreeNode::Leaf {
        value: leaf_weight(g, h, params.lambda)?,
        n: rows.len(),
    };
    if depth >= params.max_depth {
        return Ok(leaf);
    }
    let Some(c) = best_split_sorted(cols, &lists, rows, gh, params) else {
        return Ok(leaf);
    };
    let goes_left = |r: usize| {
        let v = x[[r, c.feature]];
        if v.is_nan() {
            c.default_left
        } else {
            v < c.threshold
        }
    };
    for &r in rows.iter() {
        side[r] = goes_left(r);
    }
    let (left_lists, right_lists): (Vec<_>, Vec<_>) = lists
        .into_iter()
        .map(|l| l.into_iter().partition::<Vec<_>, _>(|p| side[p.1]))
        .unzip();
    let mid = partition(rows, goes_left);
    let (l, r) = rows.split_at_mut(mid);
    Ok(TreeNode::Split {
        feature: c.feature,
        threshold: c.threshold,
        default_left: c.default_left,
        left: Box::new(grow(x, cols, left_lists, side, l, gh, params, depth + 1)?),
        right: Box::new(grow(x, cols, right_lists, side, r, gh, params, depth + 1)?),
        stats: Some(c.stats),
    })
}

/// Leaf values are unscaled; predictions add `eta` times their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostEnsemble {
    pub trees: Vec<TreeNode>,
    pub base_score: f64,
    pub eta: f64,
    pub n_features: usize,
}

impl BoostEnsemble {
    pub fn raw_score(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.base_score + self.eta * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// The same ensemble keeping only its first `k` trees.
    pub fn truncated(&self, k: usize) -> BoostEnsemble {
        BoostEnsemble {
            trees: self.trees[..k.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }
}

impl Model for BoostEnsemble {
    fn score(&self, x: ArrayView1<'_, f64>) -> f64 {
        sigmoid(self.raw_score(x))
    }
}

pub fn predict_boost(ensemble: &BoostEnsemble, x: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != ensemble.n_features {
        return Err(Error::Validation(format!(
            "{} features given, ensemble expects {}",
            x.len(),
            ensemble.n_features
        )));
    }
    Ok(ensemble.score(x))
}

/// Fits the booster. `x` may contain NaN for missing entries.
pub fn fit_boost(x: ArrayView2<'_, f64>, y: &[bool], params: &BoostParams) -> Result<BoostEnsemble> {
    params.validate()?;
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::Validation(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| v.is_infinite()) {
        return Err(Error::Validation("feature matrix contains infinite values".into()));
    }
    let n = y.len();
    let rate = (y.iter().filter(|&&b| b).count() as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (rate / (1.0 - rate)).ln();
    let mut raw = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut rows: Vec<usize> = (0..n).collect();
    let cols = Columns::new(x);
    let sorted = cols.sorted_lists();
    let mut side = vec![false; n];
    for _ in 0..params.n_rounds {
        let gh: Vec<GradHess> = raw.iter().zip(y).map(|(&f, &l)| logistic_grad_hess(sigmoid(f), l)).collect();
        rows.sort_unstable();
        let tree = grow(x, &cols, sorted.clone(), &mut side, &mut rows, &gh, params, 0)?;
        for (i, f) in raw.iter_mut().enumerate() {
            *f += params.eta * tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ok(BoostEnsemble {
        trees,
        base_score,
        eta: params.eta,
        n_features: x.ncols(),
    })
}

/// Copies `x` with zeros in the listed columns replaced by NaN.
pub fn zeros_as_missing(x: ArrayView2<'_, f64>, columns: &[usize]) -> Array2<f64> {
    let mut out = x.to_owned();
    for &c in columns {
        out.column_mut(c).mapv_inplace(|v| if v == 0.0 { f64::NAN } else { v });
    }
    out
}

struct SparseBoost {
    inner: BoostEnsemble,
    columns: Vec<usize>,
}

impl Model for SparseBoost {
    fn score(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut row = x.to_owned();
        for &c in &self.columns {
            if row[c] == 0.0 {
                row[c] = f64::NAN;
            }
        }
        self.inner.score(row.view())
    }
}

/// Booster as a CV learner. With `sparse_columns` set, zeros in those
/// (one-hot) columns are treated as missing.
#[derive(Debug, Clone, Default)]
pub struct Booster {
    pub params: BoostParams,
    pub sparse_columns: Vec<usize>,
}

impl Booster {
    fn wrap(&self, inner: BoostEnsemble) -> Box<dyn Model> {
        if self.sparse_columns.is_empty() {
            Box::new(inner)
        } else {
            Box::new(SparseBoost {
                inner,
                columns: self.sparse_columns.clone(),
            })
        }
    }

    /// One fit with the most rounds, cut back to each requested count.
    /// Matches separate fits exactly since trees never look ahead.
    pub fn fit_rounds(&self, rounds: &[usize], x: ArrayView2<'_, f64>, y: &[bool]) -> Result<Vec<Box<dyn Model>>> {
        let params = BoostParams {
            n_rounds: rounds.iter().copied().max().unwrap_or(0),
            ..self.params.clone()
        };
        let full = if self.sparse_columns.is_empty() {
            fit_boost(x, y, &params)?
        } else {
            fit_boost(zeros_as_missing(x, &self.sparse_columns).view(), y, &params)?
        };
        Ok(rounds.iter().map(|&k| self.wrap(full.truncated(k))).collect())
    }
}

impl Learner for Booster {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], seed: u64) -> Result<Box<dyn Model>> {
        let params = BoostParams {
            seed,
            ..self.params.clone()
        };
        let inner = if self.sparse_columns.is_empty() {
            fit_boost(x, y, &params)?
        } else {
            fit_boost(zeros_as_missing(x, &self.sparse_columns).view(), y, &params)?
        };
        Ok(self.wrap(inner))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn grad_hess_formula() {
        assert_eq!(logistic_grad_hess(0.5, true), GradHess { g: -0.5, h: 0.25 });
        assert_eq!(logistic_grad_hess(0.5, false), GradHess { g: 0.5, h: 0.25 });
        let hs: Vec<f64> = (1..100).map(|i| logistic_grad_hess(i as f64 / 100.0, true).h).collect();
        assert_eq!(hs.iter().cloned().fold(0.0, f64::max), hs[49]);
    }

    #[test]
    fn leaf_weight_values() {
        assert_eq!(leaf_weight(2.0, 3.0, 1.0).unwrap(), -0.5);
        assert_eq!(leaf_weight(0.0, 2.0, 1.0).unwrap(), 0.0);
        assert!(leaf_weight(2.0, 3.0, 1e12).unwrap().abs() < 1e-11);
        assert!(leaf_weight(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn split_gain_values() {
        assert_eq!(split_gain(-2.0, 1.0, 2.0, 1.0, 1.0, 0.0), 2.0);
        assert!(split_gain(-2.0, 1.0, 2.0, 1.0, 1.0, 5.0) < 0.0);
        // equal children with λ > 0 never help
        for (g, h, l) in [(1.0, 1.0, 1.0), (-3.0, 0.5, 0.1), (2.5, 4.0, 3.0)] {
            let gain = split_gain(g, h, g, h, l, 0.0);
            let closed = 0.5 * (2.0 * g * g / (h + l) - 4.0 * g * g / (2.0 * h + l));
            assert!((gain - closed).abs() < 1e-12);
            assert!(gain <= 0.0);
        }
    }

    #[test]
    fn quantiles_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let w = vec![1.0; 100];
        assert_eq!(weighted_quantile_candidates(&v, &w, 0.25), vec![26.0, 51.0, 76.0]);
        assert!(weighted_quantile_candidates(&[3.0], &[1.0], 0.1).is_empty());
        assert!(weighted_quantile_candidates(&[2.0; 5], &[1.0; 5], 0.1).is_empty());
    }

    #[test]
    fn all_missing_node_has_no_split() {
        let x = array![[f64::NAN, f64::NAN], [f64::NAN, f64::NAN]];
        let gh = [GradHess { g: 1.0, h: 1.0 }, GradHess { g: -1.0, h: 1.0 }];
        assert!(exact_greedy_split(x.view(), &[0, 1], &gh, &BoostParams::default()).is_none());
    }

    #[test]
    fn missing_rows_follow_negative_gradient() {
        let x = array![[1.0], [2.0], [3.0], [4.0], [f64::NAN], [f64::NAN]];
        let gh: Vec<GradHess> = [0.5, 0.5, -0.5, -0.5, -2.0, -2.0]
            .iter()
            .map(|&g| GradHess { g, h: 0.25 })
            .collect();
        let c = exact_greedy_split(x.view(), &[0, 1, 2, 3, 4, 5], &gh, &BoostParams::default()).unwrap();
        assert_eq!(c.threshold, 3.0);
        assert!(!c.default_left, "missing rows belong with the negative-g right child");
    }

    #[test]
    fn zero_rounds_is_base_rate() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = [true, false, false, false];
        let e = fit_boost(
            x.view(),
            &y,
            &BoostParams {
                n_rounds: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((e.score(x.row(0)) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_eta_is_base_rate() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = [true, true, false, false];
        let e = fit_boost(
            x.view(),
            &y,
            &BoostParams {
                eta: 0.0,
                n_rounds: 5,
                ..Default::default()
            },
        )
        .unwrap();
        for r in x.rows() {
            assert_eq!(e.score(r), 0.5);
        }
    }
}
