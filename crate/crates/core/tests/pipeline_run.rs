use std::time::Instant;

use survkit::pipeline::{render_table, rerender, run_config, run_pipeline, write_synthetic, EvalMode, PipelineConfig, LEARNER_NAMES};
use survkit::preprocess::{build_genomic_matrix, labels_from_frame, EncoderOptions, LabelRule};
use survkit::synth::{generate_synthetic, SynthSpec};
use survkit::table::intersect_patients;
use survkit::Error;

fn config(learners: &[&str], extra: &str) -> PipelineConfig {
    let mut s = format!("seed = 3\ndataset = \"genomic\"\n{extra}\n[synthetic]\nrows = 300\nseed = 3\n");
    for l in learners {
        s.push_str(&format!("\n[[learners]]\nname = \"{l}\"\n"));
    }
    PipelineConfig::from_toml_str(&s).unwrap()
}

#[test]
#[ignore]
fn timing_all_learners() {
    let dir = tempfile::tempdir().unwrap();
    for l in LEARNER_NAMES {
        let t = Instant::now();
        let mut cfg = config(&[l], "");
        if std::env::var("DATASET").as_deref() == Ok("clinical") {
            cfg.dataset = survkit::pipeline::Dataset::Clinical;
        }
        let (r, _) = run_config(&cfg, dir.path()).unwrap();
        let row = &r.learners[0];
        eprintln!("{l}: {:.2}s val {:.3} test {:.3}", t.elapsed().as_secs_f64(), row.val_auc, row.test_auc);
    }
}

#[test]
#[ignore]
fn timing_booster_fit() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let x = ndarray::Array2::from_shape_fn((240, 250), |(_, j)| if j < 150 { rng.random::<f64>() } else { rng.random_range(0..2) as f64 });
    let y: Vec<bool> = (0..240).map(|i| x[[i, 0]] + x[[i, 1]] > 1.0).collect();
    let t = Instant::now();
    let p = survkit::boosting::BoostParams { n_rounds: 200, ..Default::default() };
    let e = survkit::boosting::fit_boost(x.view(), &y, &p).unwrap();
    eprintln!("boost 200 rounds: {:.3}s ({} trees)", t.elapsed().as_secs_f64(), e.trees.len());
}

fn small(body: &str) -> PipelineConfig {
    PipelineConfig::from_toml_str(&format!("seed = 5\ndataset = \"genomic\"\n[synthetic]\nrows = 200\nexpression_genes = 30\nseed = 5\n{body}")).unwrap()
}

#[test]
fn knn_only_run_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let (r, out) = run_config(&small("[[learners]]\nname = \"knn\"\n"), dir.path()).unwrap();
    assert_eq!(r.learners.len(), 1);
    assert_eq!(r.learners[0].mode, EvalMode::NestedCv);
    assert_eq!(r.labeled + r.unlabeled, r.patients);
    assert_eq!(r.split.train + r.split.val + r.split.test, r.labeled);
    let table = std::fs::read_to_string(out.join("table.md")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(2).unwrap().starts_with("| knn |"));
    for f in ["report.json", "env.json", "roc_knn.csv", "curve_knn.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let curve = std::fs::read_to_string(out.join("curve_knn.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 5);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let body = "[[learners]]\nname = \"knn\"\n[[learners]]\nname = \"boost\"\ngrid = [10]\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_config(&small(body), a.path()).unwrap();
    run_config(&small(body), b.path()).unwrap();
    for f in ["report.json", "table.md", "roc_knn.csv", "roc_boost.csv", "curve_knn.csv"] {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn unknown_learner_is_a_config_error() {
    let text = "seed = 1\ndataset = \"clinical\"\n[synthetic]\n[[learners]]\nname = \"xgboost\"\n";
    let err = PipelineConfig::from_toml_str(text).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("xgboost"), "{err}");
    let bad_option = "seed = 1\ndataset = \"clinical\"\n[synthetic]\n[[learners]]\nname = \"knn\"\noptions = { kk = 3 }\n";
    let err = PipelineConfig::from_toml_str(bad_option).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn missing_data_file_fails_at_load_as_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    std::fs::write(
        &cfg,
        "dataset = \"clinical\"\n[data]\nclinical = \"nope.tsv\"\nclinical_schema = \"nope.toml\"\n[[learners]]\nname = \"knn\"\n",
    )
    .unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().starts_with("[load]"), "{err}");
}

#[test]
fn zero_missing_rate_gives_empty_mask() {
    let spec = SynthSpec { rows: 120, missing_rate: 0.0, ..Default::default() };
    let t = generate_synthetic(&spec).unwrap();
    let frames = intersect_patients(&[t.clinical, t.expression, t.cna, t.mutations]).unwrap();
    let labels = labels_from_frame(&frames[0], &LabelRule::default()).unwrap();
    let rows: Vec<usize> = (0..labels.len()).collect();
    let opts = EncoderOptions { divisor: Default::default() };
    let (_, m) = build_genomic_matrix(&frames[1], &frames[2], &frames[3], &rows, labels, opts).unwrap();
    assert!(m.missing_mask.as_ref().is_none_or(|mask| mask.iter().all(|&b| !b)));
    assert!(m.values.iter().all(|v| v.is_finite()));
}

/// Every learner at one fixed setting, sized to keep ten seeds quick.
const CHEAP: &str = r#"
[[learners]]
name = "knn"
grid = [11]
[[learners]]
name = "elastic_net"
grid = [0.01]
options = { epochs = 50 }
[[learners]]
name = "linear_svm"
grid = [0.1]
[[learners]]
name = "mlp"
grid = [0.01]
options = { hidden = [8], epochs = 50 }
[[learners]]
name = "random_forest"
grid = [25]
[[learners]]
name = "irls_l1"
grid = [0.05]
[[learners]]
name = "self_training"
grid = [0.05]
[[learners]]
name = "co_training"
grid = [0.05]
options = { max_rounds = 2 }
[[learners]]
name = "goa_mlp"
grid = [2]
options = { n_agents = 10, max_iters = 10 }
[[learners]]
name = "boost"
grid = [20]
"#;

#[test]
fn no_signal_gives_chance_auc() {
    let mut sums = vec![0.0; LEARNER_NAMES.len()];
    for seed in 0..10 {
        let cfg = PipelineConfig::from_toml_str(&format!(
            "seed = {seed}\ndataset = \"genomic\"\n[synthetic]\nrows = 300\nexpression_genes = 20\ninformative = 0\nseed = {seed}\n{CHEAP}"
        ))
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (r, _) = run_config(&cfg, dir.path()).unwrap();
        for (s, l) in sums.iter_mut().zip(&r.learners) {
            *s += l.test_auc / 10.0;
        }
    }
    for (name, mean) in LEARNER_NAMES.iter().zip(&sums) {
        assert!((0.4..=0.6).contains(mean), "{name}: mean test AUC {mean}");
    }
}

#[test]
fn strong_signal_is_found_by_l1_logistic() {
    let mut aucs = Vec::new();
    for seed in 0..10 {
        let cfg = PipelineConfig::from_toml_str(&format!(
            "seed = {seed}\ndataset = \"genomic\"\n[synthetic]\nrows = 500\nexpression_genes = 40\nsignal = 4.0\nlabel_noise = 0.0\nseed = {seed}\n[[learners]]\nname = \"irls_l1\"\ngrid = [0.02]\n"
        ))
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (r, _) = run_config(&cfg, dir.path()).unwrap();
        assert_eq!(r.learners[0].mode, EvalMode::Fixed);
        aucs.push(r.learners[0].test_auc);
    }
    let mean = aucs.iter().sum::<f64>() / 10.0;
    assert!(mean >= 0.85, "{aucs:?}");
}

#[test]
fn rerender_rebuilds_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let (r, out) = run_config(&small("[[learners]]\nname = \"knn\"\ngrid = [5]\n"), dir.path()).unwrap();
    std::fs::remove_file(out.join("table.md")).unwrap();
    let table = rerender(&out).unwrap();
    assert_eq!(table, render_table(&r));
    assert_eq!(std::fs::read_to_string(out.join("table.md")).unwrap(), table);
}

#[test]
fn written_synthetic_config_runs_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { rows: 150, expression_genes: 20, ..Default::default() };
    write_synthetic(&spec, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    let fast = text.replace("name = \"boost\"\n", "name = \"boost\"\ngrid = [10]\n");
    std::fs::write(dir.path().join("config.toml"), fast).unwrap();
    let (r, out) = run_pipeline(&dir.path().join("config.toml")).unwrap();
    assert_eq!(out, dir.path().join("out"));
    assert_eq!(r.learners.len(), 2);
    // same tables generated in memory give the same numbers
    let mem = PipelineConfig::from_toml_str("seed = 0\ndataset = \"genomic\"\n[synthetic]\nrows = 150\nexpression_genes = 20\n[[learners]]\nname = \"knn\"\n[[learners]]\nname = \"boost\"\ngrid = [10]\n")
    .unwrap();
    let other = tempfile::tempdir().unwrap();
    let (m, _) = run_config(&mem, other.path()).unwrap();
    assert_eq!(r.learners[0].test_auc, m.learners[0].test_auc);
    assert_eq!(r.learners[1].test_auc, m.learners[1].test_auc);
}
