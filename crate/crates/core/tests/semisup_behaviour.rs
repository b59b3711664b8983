use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use survkit::linear::{IrlsConfig, IrlsL1};
use survkit::metrics::auc;
use survkit::semisup::{co_train, self_train, SelfTrainConfig, ViewSpec};
use survkit::{Learner, Model, Result};

fn logistic() -> IrlsL1 {
    IrlsL1(IrlsConfig { lambda: 1e-3, ..Default::default() })
}

/// Two 1-D clusters around ±3, four labeled points, unlabeled points inside the clusters.
fn clusters(seed: u64) -> (Array2<f64>, Vec<bool>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xl = Array2::from_shape_vec((4, 1), vec![-3.5, -2.5, 2.5, 3.5]).unwrap();
    let yl = vec![false, false, true, true];
    let xu = Array2::from_shape_fn((40, 1), |(i, _)| if i % 2 == 0 { -3.0 } else { 3.0 } + rng.random_range(-0.8..0.8));
    (xl, yl, xu)
}

#[test]
fn self_training_converges_on_clusters() {
    for seed in 0..5 {
        let (xl, yl, xu) = clusters(seed);
        let cfg = SelfTrainConfig { confidence_alpha: 0.9, max_iters: 20 };
        let fit = self_train(&logistic(), xl.view(), &yl, xu.view(), &cfg, 0).unwrap();
        assert!(fit.converged && fit.iterations <= 3, "seed {seed}: {} iterations", fit.iterations);
        // decision boundary inside the gap between clusters
        let at = |v: f64| fit.model.score(ndarray::array![v].view());
        assert!(at(-2.2) < 0.5 && at(2.2) > 0.5);
        // one more pass at the fixed point changes nothing
        let again = self_train(&logistic(), xl.view(), &yl, xu.view(), &SelfTrainConfig { max_iters: fit.iterations + 1, ..cfg }, 0).unwrap();
        assert_eq!(again.predictions, fit.predictions);
    }
}

#[test]
fn alpha_one_equals_labeled_fit() {
    let (xl, yl, xu) = clusters(1);
    let cfg = SelfTrainConfig { confidence_alpha: 1.0, max_iters: 10 };
    let fit = self_train(&logistic(), xl.view(), &yl, xu.view(), &cfg, 0).unwrap();
    let plain = logistic().fit(xl.view(), &yl, 0).unwrap();
    assert_eq!(fit.iterations, 1);
    assert_eq!(fit.pseudo_labeled, 0);
    assert_eq!(fit.model.score_rows(xu.view()), plain.score_rows(xu.view()));
}

#[test]
fn empty_unlabeled_pool_reduces_to_base() {
    let (xl, yl, xu) = clusters(2);
    let empty = Array2::<f64>::zeros((0, 1));
    let plain = logistic().fit(xl.view(), &yl, 0).unwrap();
    let st = self_train(&logistic(), xl.view(), &yl, empty.view(), &SelfTrainConfig::default(), 0).unwrap();
    assert_eq!(st.model.score_rows(xu.view()), plain.score_rows(xu.view()));
    let spec = ViewSpec { views: vec![vec![0]], max_rounds: 3 };
    let ct = co_train(&logistic(), xl.view(), &yl, empty.view(), &spec, 0).unwrap();
    assert_eq!(ct.model.score_rows(xu.view()), plain.score_rows(xu.view()));
}

/// Four features; view A = {0,1}, view B = {2,3}, each a noisy copy of the label
/// drawn independently given the class.
fn two_views(seed: u64, n: usize) -> (Array2<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let y: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let x = Array2::from_shape_fn((n, 4), |(i, j)| {
        let s = if y[i] { 0.8 } else { -0.8 };
        if j % 2 == 0 { s + noise.sample(&mut rng) } else { 0.5 * s + noise.sample(&mut rng) }
    });
    (x, y)
}

#[test]
fn co_training_holds_up_against_single_view() {
    let spec = ViewSpec { views: vec![vec![0, 1], vec![2, 3]], max_rounds: 5 };
    let (mut co, mut single) = (0.0, 0.0);
    for seed in 0..10 {
        let (x, y) = two_views(seed, 600);
        let (xl, yl) = (x.slice(ndarray::s![..30, ..]).to_owned(), y[..30].to_vec());
        let xu = x.slice(ndarray::s![30..300, ..]).to_owned();
        let (xt, yt) = (x.slice(ndarray::s![300.., ..]).to_owned(), &y[300..]);
        let fit = co_train(&logistic(), xl.view(), &yl, xu.view(), &spec, 0).unwrap();
        assert!(fit.train_sizes.windows(2).all(|w| w[0] <= w[1]));
        assert!(*fit.train_sizes.last().unwrap() <= 30 + 270);
        let mut seen = fit.added.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), fit.added.len());
        co += auc(&fit.model.score_rows(xt.view()), yt).unwrap();
        let a = xl.select(ndarray::Axis(1), &[0, 1]);
        let m = logistic().fit(a.view(), &yl, 0).unwrap();
        single += auc(&m.score_rows(xt.select(ndarray::Axis(1), &[0, 1]).view()), yt).unwrap();
    }
    assert!(co / 10.0 >= single / 10.0 - 0.02, "co {} single {}", co / 10.0, single / 10.0);
}

struct Fixed(bool);
impl Model for Fixed {
    fn score(&self, _x: ArrayView1<'_, f64>) -> f64 {
        if self.0 { 0.9 } else { 0.1 }
    }
}

#[test]
fn disagreeing_views_never_grow() {
    // view fitted on column 0 always says yes, on column 1 always no
    let learner = |x: ArrayView2<'_, f64>, _y: &[bool], _s: u64| -> Result<Box<dyn Model>> {
        Ok(Box::new(Fixed(x[[0, 0]] > 0.0)))
    };
    let xl = ndarray::array![[1.0, -1.0], [1.0, -1.0]];
    let xu = ndarray::array![[0.0, 0.0], [2.0, 2.0]];
    let spec = ViewSpec { views: vec![vec![0], vec![1]], max_rounds: 4 };
    let fit = co_train(&learner, xl.view(), &[true, false], xu.view(), &spec, 0).unwrap();
    assert_eq!(fit.train_sizes, vec![2; 4]);
    assert!(fit.added.is_empty());
    let zero = co_train(&learner, xl.view(), &[true, false], xu.view(), &ViewSpec { max_rounds: 0, ..spec }, 0).unwrap();
    assert_eq!(zero.train_sizes, vec![2]);
    let _ = Learner::fit(&learner, xl.view(), &[true, false], 0).unwrap();
}
