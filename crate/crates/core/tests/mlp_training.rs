use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survkit::mlp::{fit_backprop, fit_backprop_traced, flatten_weights, init_mlp, mlp_gradient, mlp_loss, unflatten_weights, BackpropConfig, MlpArch, MlpModel};
use survkit::Model;

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-8)
}

#[test]
fn gradient_matches_central_differences() {
    let arch = MlpArch::new(3, &[3]).unwrap();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = Array2::from_shape_fn((8, 3), |_| rng.random_range(-2.0..2.0));
        let y: Vec<bool> = (0..8).map(|_| rng.random()).collect();
        let mut m = init_mlp(&arch, seed).unwrap();
        // non-zero biases so every parameter is exercised
        for b in m.biases.iter_mut() {
            b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let l2 = 0.01;
        let g = mlp_gradient(&m, x.view(), &y, l2);
        let p = flatten_weights(&m);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..p.len() {
            let mut up = p.clone();
            up[k] += h;
            let mut dn = p.clone();
            dn[k] -= h;
            let f = (mlp_loss(&unflatten_weights(&arch, &up).unwrap(), x.view(), &y, l2)
                - mlp_loss(&unflatten_weights(&arch, &dn).unwrap(), x.view(), &y, l2))
                / (2.0 * h);
            worst = worst.max(rel_err(g[k], f));
        }
        assert!(worst < 1e-4, "seed {seed}: {worst}");
    }
}

#[test]
fn xor_is_learned() {
    let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let y = [false, true, true, false];
    let arch = MlpArch::new(2, &[8]).unwrap();
    let mut solved = 0;
    for seed in 0..10 {
        let cfg = BackpropConfig { learning_rate: 0.5, epochs: 5000, l2_lambda: 0.0, seed };
        let m = fit_backprop(x.view(), &y, &arch, &cfg).unwrap();
        if x.rows().into_iter().zip(&y).all(|(r, &l)| m.predict_label(r) == l) {
            solved += 1;
        }
    }
    assert!(solved >= 8, "{solved}/10");
}

#[test]
fn loss_non_increasing_small_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Array2::from_shape_fn((30, 4), |_| rng.random_range(-1.0..1.0));
    let y: Vec<bool> = (0..30).map(|i| x[[i, 0]] - x[[i, 2]] > 0.0).collect();
    let arch = MlpArch::new(4, &[6]).unwrap();
    let cfg = BackpropConfig { learning_rate: 0.05, epochs: 300, l2_lambda: 1e-3, seed: 2 };
    let (_, trace) = fit_backprop_traced(x.view(), &y, &arch, &cfg).unwrap();
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    assert!(trace.last().unwrap() < &trace[0]);
}

#[test]
fn json_round_trip_keeps_predictions() {
    let arch = MlpArch::new(3, &[4, 2]).unwrap();
    let m = init_mlp(&arch, 5).unwrap();
    let back: MlpModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    let x = array![[0.1, -0.3, 2.0], [1.0, 1.0, -1.0]];
    assert_eq!(m.score_rows(x.view()), back.score_rows(x.view()));
}
