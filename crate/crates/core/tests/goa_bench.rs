use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use survkit::goa::{goa_train_mlp, goa_tune_hyperparams, optimize, Bounds, GoaMlpConfig, GoaParams, HyperDomain, Scale, Swarm};
use survkit::metrics::auc;
use survkit::mlp::MlpArch;
use survkit::{Learner, Model, Result};

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[test]
fn sphere_benchmark() {
    let bounds = Bounds::uniform(5, -10.0, 10.0);
    let mut hits = 0;
    let mut bests = Vec::new();
    for seed in 0..10 {
        let p = GoaParams { n_agents: 50, max_iters: 200, seed, ..Default::default() };
        let r = optimize(&sphere, &bounds, &p).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(bounds.contains(&r.best_position));
        bests.push(r.best_fitness);
        if r.best_fitness < 1e-2 {
            hits += 1;
        }
    }
    assert!(hits >= 9, "{bests:?}");
}

#[test]
fn swarm_stays_in_bounds_every_iteration() {
    let bounds = Bounds::uniform(3, -2.0, 1.0);
    let p = GoaParams { n_agents: 30, max_iters: 50, seed: 4, ..Default::default() };
    let f = |x: &[f64]| (x[0] - 3.0).powi(2) + x[1].abs() + (x[2] + 5.0).powi(2);
    let mut s = Swarm::init(&f, &bounds, &p).unwrap();
    let mut prev = s.best_fitness;
    for _ in 0..p.max_iters {
        s.step(&f, &p).unwrap();
        for r in s.positions.rows() {
            assert!(bounds.contains(r.as_slice().unwrap()));
        }
        assert!(s.best_fitness <= prev);
        prev = s.best_fitness;
    }
}

#[test]
fn determinism_and_zero_budget() {
    let bounds = Bounds::uniform(2, -1.0, 1.0);
    let p = GoaParams { n_agents: 10, max_iters: 20, seed: 8, ..Default::default() };
    assert_eq!(optimize(&sphere, &bounds, &p).unwrap(), optimize(&sphere, &bounds, &p).unwrap());
    let zero = GoaParams { max_iters: 0, ..p };
    let r = optimize(&sphere, &bounds, &zero).unwrap();
    let init = Swarm::init(&sphere, &bounds, &zero).unwrap();
    assert_eq!(r.best_fitness, init.fitness.iter().cloned().fold(f64::INFINITY, f64::min));
    assert_eq!(r.trace.len(), 1);
}

fn blobs(seed: u64, n: usize) -> (Array2<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.7).unwrap();
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let pos = i % 2 == 0;
        let c = if pos { 1.5 } else { -1.5 };
        x[[i, 0]] = c + noise.sample(&mut rng);
        x[[i, 1]] = c + noise.sample(&mut rng);
        y.push(pos);
    }
    (x, y)
}

#[test]
fn goa_mlp_on_blobs() {
    let arch = MlpArch::new(2, &[4]).unwrap();
    let mut good = 0;
    let mut accs = Vec::new();
    for seed in 0..10 {
        let (x, y) = blobs(seed, 200);
        let p = GoaParams { n_agents: 20, max_iters: 100, seed, ..Default::default() };
        let (m, r) = goa_train_mlp(x.view(), &y, &arch, &p, &GoaMlpConfig::default(), None).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        let acc = x.rows().into_iter().zip(&y).filter(|(row, &l)| m.predict_label(*row) == l).count() as f64 / y.len() as f64;
        accs.push(acc);
        if acc >= 0.9 {
            good += 1;
        }
    }
    assert!(good >= 8, "{accs:?}");
}

/// Scores rows by projection on the direction at angle `theta`.
struct Direction(f64);

impl Model for Direction {
    fn score(&self, x: ArrayView1<'_, f64>) -> f64 {
        x[0] * self.0.cos() + x[1] * self.0.sin()
    }
}

fn direction_learner(theta: f64) -> Box<dyn Learner> {
    Box::new(move |_x: ArrayView2<'_, f64>, _y: &[bool], _s: u64| -> Result<Box<dyn Model>> { Ok(Box::new(Direction(theta))) })
}

/// Class signal along angle 0.63, heavy noise across it, so AUC peaks sharply.
fn ridge(seed: u64, n: usize) -> (Array2<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let (c, s) = (0.63f64.cos(), 0.63f64.sin());
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let pos = i % 2 == 0;
        let along = if pos { 0.3 } else { -0.3 } + 0.3 * unit.sample(&mut rng);
        let across = 5.0 * unit.sample(&mut rng);
        x[[i, 0]] = along * c - across * s;
        x[[i, 1]] = along * s + across * c;
        y.push(pos);
    }
    (x, y)
}

#[test]
fn tuner_within_one_grid_cell() {
    let dom = HyperDomain { lower: 0.0, upper: 1.0, scale: Scale::Linear, integer: false };
    for seed in 0..5 {
        let (x, y) = ridge(50 + seed, 2000);
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
        let aucs: Vec<f64> = grid.iter().map(|&t| auc(&Direction(t).score_rows(x.view()), &y).unwrap()).collect();
        let best = (0..21).max_by(|&a, &b| aucs[a].total_cmp(&aucs[b])).unwrap();
        let p = GoaParams { n_agents: 20, max_iters: 30, seed, ..Default::default() };
        let factory = |v: &[f64]| direction_learner(v[0]);
        let r = goa_tune_hyperparams(&factory, std::slice::from_ref(&dom), (x.view(), &y), (x.view(), &y), &p).unwrap();
        assert!((r.values[0] - grid[best]).abs() <= 0.05 + 1e-12, "seed {seed}: {} vs {}", r.values[0], grid[best]);
        assert!(r.failures.is_empty());
    }
}
