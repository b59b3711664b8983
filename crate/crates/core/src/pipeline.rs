//! Config-driven run: load or generate tables, preprocess, split, evaluate
//! each configured learner and write the report files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, Axis};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::{Knn, KnnConfig, LinearSvm, SvmConfig};
use crate::boosting::{BoostParams, Booster};
use crate::error::{Error, Result};
use crate::goa::{GoaMlp, GoaMlpConfig, GoaParams};
use crate::learner::{derive_seed, Learner, Simplicity, Tunable};
use crate::linear::{ElasticNet, ElasticNetConfig, IrlsConfig, IrlsL1};
use crate::metrics::roc_curve;
use crate::mlp::{BackpropConfig, MlpLearner};
use crate::preprocess::{
    apply_drop_policy, build_clinical_matrix, build_genomic_matrix, explanatory_columns, fit_encoder, labels_from_frame,
    ClassLabel, DesignMatrix, EncoderOptions, FeatureGroup, LabelRule, StdDivisor,
};
use crate::semisup::{CoTraining, SelfTrainConfig, SelfTraining, ViewSpec};
use crate::synth::{generate_synthetic, SynthSpec, SynthTables};
use crate::table::{intersect_patients, load_table, write_table, ColumnKind, SchemaSpec, TableFormat, TableFrame};
use crate::trees::{ForestConfig, RandomForest};
use crate::validation::{make_split, nested_cv, repeated_eval, AccuracyCurve, CvReport, RepeatedEval, SplitPlan};

pub const LEARNER_NAMES: [&str; 10] = [
    "knn",
    "elastic_net",
    "linear_svm",
    "mlp",
    "random_forest",
    "irls_l1",
    "self_training",
    "co_training",
    "goa_mlp",
    "boost",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Clinical,
    Genomic,
}

/// Table files on disk. Paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub clinical: PathBuf,
    pub clinical_schema: PathBuf,
    #[serde(default)]
    pub expression: Option<PathBuf>,
    #[serde(default)]
    pub cna: Option<PathBuf>,
    #[serde(default)]
    pub mutations: Option<PathBuf>,
    /// Identifier column of the genomic tables.
    #[serde(default = "default_id")]
    pub id_column: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
}

fn default_id() -> String {
    "PATIENT_ID".into()
}

fn default_delimiter() -> String {
    "\t".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub name: String,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub options: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: Dataset,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub stratify: bool,
    #[serde(default)]
    pub std_divisor: StdDivisor,
    #[serde(default)]
    pub synthetic: Option<SynthSpec>,
    #[serde(default)]
    pub data: Option<DataPaths>,
    #[serde(default)]
    pub label: LabelRule,
    pub learners: Vec<LearnerSpec>,
}

fn default_out() -> PathBuf {
    "out".into()
}


impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.synthetic, &self.data) {
            (Some(_), Some(_)) => return Err(Error::Config("give either [synthetic] or [data], not both".into())),
            (None, None) => return Err(Error::Config("missing [synthetic] or [data] section".into())),
            (Some(s), None) => s.validate().map_err(|e| Error::Config(format!("synthetic: {e}")))?,
            (None, Some(d)) => {
                if self.dataset == Dataset::Genomic && (d.expression.is_none() || d.cna.is_none() || d.mutations.is_none()) {
                    return Err(Error::Config("genomic runs need expression, cna and mutations paths".into()));
                }
                if d.delimiter.len() != 1 {
                    return Err(Error::Config(format!("delimiter must be one byte, got {:?}", d.delimiter)));
                }
            }
        }
        if self.learners.is_empty() {
            return Err(Error::Config("no learners configured".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.learners {
            if !seen.insert(&l.name) {
                return Err(Error::Config(format!("learner `{}` listed twice", l.name)));
            }
            resolve(l)?;
        }
        Ok(())
    }
}

/// A configured learner with its options parsed, not yet bound to data.
#[derive(Debug, Clone)]
struct Resolved {
    name: String,
    param: &'static str,
    grid: Vec<f64>,
    simplicity: Simplicity,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Knn,
    ElasticNet(ElasticNetConfig),
    Svm(SvmConfig),
    Mlp(Vec<usize>, BackpropConfig),
    Forest(ForestConfig),
    Irls(IrlsConfig),
    SelfTrain(IrlsConfig, SelfTrainConfig),
    CoTrain(IrlsConfig, usize),
    GoaMlp(GoaParams, GoaMlpConfig),
    Boost(BoostParams, bool),
}

fn config_err(learner: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("learner `{learner}`: {msg}"))
}

fn take<T: DeserializeOwned>(learner: &str, opts: &mut toml::Table, key: &str) -> Result<Option<T>> {
    opts.remove(key)
        .map(|v| v.try_into().map_err(|e| config_err(learner, format!("option `{key}`: {e}"))))
        .transpose()
}

/// `base` with the keys of `opts` written over it.
fn overlay<T: Serialize + DeserializeOwned>(learner: &str, base: &T, opts: toml::Table) -> Result<T> {
    let mut table = toml::Table::try_from(base).map_err(|e| config_err(learner, e))?;
    table.extend(opts);
    toml::Value::Table(table).try_into().map_err(|e| config_err(learner, e))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

fn resolve(spec: &LearnerSpec) -> Result<Resolved> {
    use Simplicity::*;
    let name = spec.name.as_str();
    let mut opts = spec.options.clone();
    let irls_grid = || vec![0.002, 0.005, 0.01, 0.02, 0.05];
    let base_irls = |opts: &mut toml::Table| -> Result<IrlsConfig> {
        let o: Option<toml::Table> = take(name, opts, "base")?;
        overlay(name, &IrlsConfig::default(), o.unwrap_or_default())
    };
    let (param, grid, simplicity, kind) = match name {
        "knn" => {
            overlay(name, &KnnConfig::default(), opts)?;
            ("k", vec![1.0, 5.0, 11.0, 21.0, 41.0], LargerIsSimpler, Kind::Knn)
        }
        "elastic_net" => {
            let base = ElasticNetConfig { epochs: 200, ..Default::default() };
            ("lambda", log_grid(1e-4, 1e-1, 4), LargerIsSimpler, Kind::ElasticNet(overlay(name, &base, opts)?))
        }
        "linear_svm" => ("c", log_grid(1e-2, 10.0, 4), SmallerIsSimpler, Kind::Svm(overlay(name, &SvmConfig::default(), opts)?)),
        "mlp" => {
            let hidden = take(name, &mut opts, "hidden")?.unwrap_or_else(|| vec![70]);
            let base = BackpropConfig { learning_rate: 0.05, epochs: 200, ..Default::default() };
            ("l2_lambda", vec![1e-4, 1e-2], LargerIsSimpler, Kind::Mlp(hidden, overlay(name, &base, opts)?))
        }
        "random_forest" => (
            "n_trees",
            vec![25.0, 50.0, 100.0],
            SmallerIsSimpler,
            Kind::Forest(overlay(name, &ForestConfig::default(), opts)?),
        ),
        "irls_l1" => ("lambda", irls_grid(), LargerIsSimpler, Kind::Irls(overlay(name, &IrlsConfig::default(), opts)?)),
        "self_training" => {
            let base = base_irls(&mut opts)?;
            ("lambda", irls_grid(), LargerIsSimpler, Kind::SelfTrain(base, overlay(name, &SelfTrainConfig::default(), opts)?))
        }
        "co_training" => {
            let base = base_irls(&mut opts)?;
            let rounds = take(name, &mut opts, "max_rounds")?.unwrap_or(5);
            if let Some(k) = opts.keys().next() {
                return Err(config_err(name, format!("unknown option `{k}`")));
            }
            ("lambda", irls_grid(), LargerIsSimpler, Kind::CoTrain(base, rounds))
        }
        "goa_mlp" => {
            let cfg = overlay(name, &GoaMlpConfig::default(), take(name, &mut opts, "mlp")?.unwrap_or_default())?;
            let base = GoaParams { n_agents: 30, max_iters: 60, ..Default::default() };
            ("hidden", vec![4.0], SmallerIsSimpler, Kind::GoaMlp(overlay(name, &base, opts)?, cfg))
        }
        "boost" => {
            let sparse = take(name, &mut opts, "sparse_one_hot")?.unwrap_or(false);
            (
                "n_rounds",
                vec![50.0, 100.0, 200.0],
                SmallerIsSimpler,
                Kind::Boost(overlay(name, &BoostParams::default(), opts)?, sparse),
            )
        }
        other => {
            return Err(Error::Config(format!(
                "unknown learner `{other}`; known learners: {}",
                LEARNER_NAMES.join(", ")
            )))
        }
    };
    let grid = spec.grid.clone().unwrap_or(grid);
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(config_err(name, "grid must be a non-empty list of finite numbers"));
    }
    Ok(Resolved {
        name: name.to_string(),
        param,
        grid,
        simplicity,
        kind,
    })
}

/// Data every learner factory may need besides the tuned value.
#[derive(Clone)]
struct Context {
    unlabeled: Arc<Array2<f64>>,
    views: Vec<Vec<usize>>,
    one_hot_columns: Vec<usize>,
}

fn count(v: f64) -> usize {
    v.round().max(1.0) as usize
}

fn tunable(r: &Resolved, ctx: &Context) -> Tunable {
    let kind = r.kind.clone();
    let ctx = ctx.clone();
    if let Kind::Boost(p, sparse) = &r.kind {
        let booster = Booster {
            params: p.clone(),
            sparse_columns: if *sparse { ctx.one_hot_columns.clone() } else { Vec::new() },
        };
        return plain_tunable(r, kind, ctx).with_path(move |grid, x, y, _seed| {
            let rounds: Vec<usize> = grid.iter().map(|&v| count(v)).collect();
            booster.fit_rounds(&rounds, x, y)
        });
    }
    plain_tunable(r, kind, ctx)
}

fn plain_tunable(r: &Resolved, kind: Kind, ctx: Context) -> Tunable {
    Tunable::new(r.name.clone(), r.grid.clone(), r.simplicity, move |v| -> Box<dyn Learner> {
        match &kind {
            Kind::Knn => Box::new(Knn(KnnConfig { k: count(v) })),
            Kind::ElasticNet(c) => Box::new(ElasticNet(ElasticNetConfig { lambda: v, ..c.clone() })),
            Kind::Svm(c) => Box::new(LinearSvm(SvmConfig { c: v, ..c.clone() })),
            Kind::Mlp(h, c) => Box::new(MlpLearner {
                hidden: h.clone(),
                cfg: BackpropConfig { l2_lambda: v, ..c.clone() },
            }),
            Kind::Forest(c) => Box::new(RandomForest(ForestConfig { n_trees: count(v), ..c.clone() })),
            Kind::Irls(c) => Box::new(IrlsL1(IrlsConfig { lambda: v, ..c.clone() })),
            Kind::SelfTrain(b, c) => Box::new(SelfTraining {
                base: Arc::new(IrlsL1(IrlsConfig { lambda: v, ..b.clone() })),
                cfg: c.clone(),
                unlabeled: ctx.unlabeled.clone(),
            }),
            Kind::CoTrain(b, rounds) => Box::new(CoTraining {
                base: Arc::new(IrlsL1(IrlsConfig { lambda: v, ..b.clone() })),
                views: ViewSpec {
                    views: ctx.views.clone(),
                    max_rounds: *rounds,
                },
                unlabeled: ctx.unlabeled.clone(),
            }),
            Kind::GoaMlp(p, c) => Box::new(GoaMlp {
                hidden: vec![count(v)],
                params: p.clone(),
                cfg: c.clone(),
            }),
            Kind::Boost(p, sparse) => Box::new(Booster {
                params: BoostParams {
                    n_rounds: count(v),
                    ..p.clone()
                },
                sparse_columns: if *sparse { ctx.one_hot_columns.clone() } else { Vec::new() },
            }),
        }
    })
}

/// Two views for co-training: expression against copy number and mutations
/// on genomic data, alternating variables on clinical data.
fn default_views(groups: &[FeatureGroup], dataset: Dataset) -> Vec<Vec<usize>> {
    let side_a = |i: usize, g: &FeatureGroup| match dataset {
        Dataset::Genomic => g.name.starts_with("expr:"),
        Dataset::Clinical => i.is_multiple_of(2),
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        if side_a(i, g) {
            a.extend(g.indices());
        } else {
            b.extend(g.indices());
        }
    }
    vec![a, b]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    NestedCv,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerResult {
    pub name: String,
    pub mode: EvalMode,
    pub param: String,
    pub best_param: f64,
    pub val_auc: f64,
    pub test_auc: f64,
    pub roc_csv: String,
    pub curve_csv: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<RepeatedEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub seed: u64,
    pub dataset: Dataset,
    pub patients: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub features: usize,
    pub split: SplitSizes,
    pub learners: Vec<LearnerResult>,
}

impl RunReport {
    pub fn learner(&self, name: &str) -> Option<&LearnerResult> {
        self.learners.iter().find(|l| l.name == name)
    }
}

/// Markdown table of validation and test AUC, ×100 to one decimal.
pub fn render_table(report: &RunReport) -> String {
    let mut out = String::from("| Model | Validation AUC | Test AUC |\n|---|---:|---:|\n");
    for l in &report.learners {
        out.push_str(&format!("| {} | {:.1} | {:.1} |\n", l.name, 100.0 * l.val_auc, 100.0 * l.test_auc));
    }
    out
}

/// Failure tagged with the stage that produced it.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: String,
    pub error: Error,
}

impl PipelineError {
    pub fn is_config(&self) -> bool {
        matches!(self.error, Error::Config(_))
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.error)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

trait Stage<T> {
    fn stage(self, name: &str) -> std::result::Result<T, PipelineError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: &str) -> std::result::Result<T, PipelineError> {
        self.map_err(|error| PipelineError {
            stage: name.to_string(),
            error,
        })
    }
}

struct Tables {
    clinical: TableFrame,
    genomic: Option<(TableFrame, TableFrame, TableFrame)>,
}

fn load_tables(cfg: &PipelineConfig, base: &Path) -> Result<Tables> {
    if let Some(spec) = &cfg.synthetic {
        let t = generate_synthetic(spec)?;
        return Ok(Tables {
            clinical: t.clinical,
            genomic: Some((t.expression, t.cna, t.mutations)),
        });
    }
    let d = cfg.data.as_ref().expect("validated");
    let path = |p: &Path| -> Result<PathBuf> {
        let full = base.join(p);
        if full.exists() {
            Ok(full)
        } else {
            Err(Error::Config(format!("file {} does not exist", full.display())))
        }
    };
    let format = TableFormat::default().with_delimiter(d.delimiter.as_bytes()[0]);
    let schema = SchemaSpec::from_path(&path(&d.clinical_schema)?)?;
    let clinical = load_table(&path(&d.clinical)?, &schema, &format)?;
    let genomic = if cfg.dataset == Dataset::Genomic {
        let wide = |kind| SchemaSpec {
            columns: vec![crate::table::ColumnSpec {
                name: d.id_column.clone(),
                kind: ColumnKind::Identifier,
                categories: None,
            }],
            default_kind: Some(kind),
        };
        let load = |p: &Option<PathBuf>, kind| load_table(&path(p.as_deref().expect("validated"))?, &wide(kind), &format);
        Some((
            load(&d.expression, ColumnKind::Numeric)?,
            load(&d.cna, ColumnKind::Numeric)?,
            load(&d.mutations, ColumnKind::Categorical)?,
        ))
    } else {
        None
    };
    Ok(Tables { clinical, genomic })
}

struct Prepared {
    matrix: DesignMatrix,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    split: SplitPlan,
}

fn prepare(cfg: &PipelineConfig, tables: Tables) -> Result<Prepared> {
    let opts = EncoderOptions { divisor: cfg.std_divisor };
    let split_for = |labels: &[ClassLabel]| -> Result<(Vec<usize>, Vec<usize>, SplitPlan)> {
        let labeled: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != ClassLabel::Unlabeled).collect();
        let unlabeled: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == ClassLabel::Unlabeled).collect();
        let y: Vec<bool> = labeled.iter().map(|&i| labels[i] == ClassLabel::Class1).collect();
        let split = make_split(labeled.len(), derive_seed(cfg.seed, &[1]), cfg.stratify.then_some(y.as_slice()))?;
        Ok((labeled, unlabeled, split))
    };
    match cfg.dataset {
        Dataset::Clinical => {
            let frame = apply_drop_policy(&tables.clinical);
            let labels = labels_from_frame(&frame, &cfg.label)?;
            let (labeled, unlabeled, split) = split_for(&labels)?;
            let fit_rows: Vec<usize> = split.train_idx.iter().map(|&i| labeled[i]).collect();
            let plan = fit_encoder(&explanatory_columns(&frame, &cfg.label).select_rows(&fit_rows), opts)?;
            let matrix = build_clinical_matrix(&frame, &cfg.label, &plan)?;
            Ok(Prepared {
                matrix,
                labeled,
                unlabeled,
                split,
            })
        }
        Dataset::Genomic => {
            let (expr, cna, muts) = tables
                .genomic
                .ok_or_else(|| Error::Config("genomic run without genomic tables".into()))?;
            let frames = intersect_patients(&[tables.clinical, expr, cna, muts])?;
            let labels = labels_from_frame(&frames[0], &cfg.label)?;
            let (labeled, unlabeled, split) = split_for(&labels)?;
            let fit_rows: Vec<usize> = split.train_idx.iter().map(|&i| labeled[i]).collect();
            let (_, matrix) = build_genomic_matrix(&frames[1], &frames[2], &frames[3], &fit_rows, labels, opts)?;
            Ok(Prepared {
                matrix,
                labeled,
                unlabeled,
                split,
            })
        }
    }
}

fn evaluate(r: &Resolved, tunable: &Tunable, x: &Array2<f64>, y: &[bool], split: &SplitPlan, seed: u64) -> Result<LearnerResult> {
    let roc_csv = format!("roc_{}.csv", r.name);
    let curve_csv = format!("curve_{}.csv", r.name);
    if r.grid.len() > 1 {
        let cv = nested_cv(x.view(), y, split, tunable, seed)?;
        if let Some(leak) = cv.audit.find_leak() {
            return Err(Error::Integrity(leak));
        }
        Ok(LearnerResult {
            name: r.name.clone(),
            mode: EvalMode::NestedCv,
            param: r.param.into(),
            best_param: cv.best_param,
            val_auc: cv.mean_val_auc,
            test_auc: cv.test_auc,
            roc_csv,
            curve_csv,
            cv: Some(cv),
            fixed: None,
        })
    } else {
        let learner = tunable.learner(r.grid[0]);
        let eval = repeated_eval(learner.as_ref(), x.view(), y, split, &[seed])?;
        Ok(LearnerResult {
            name: r.name.clone(),
            mode: EvalMode::Fixed,
            param: r.param.into(),
            best_param: r.grid[0],
            val_auc: eval.val_mean,
            test_auc: eval.test_mean,
            roc_csv,
            curve_csv,
            cv: None,
            fixed: Some(eval),
        })
    }
}

fn curve_of(l: &LearnerResult) -> AccuracyCurve {
    match (&l.cv, &l.fixed) {
        (Some(cv), _) => cv.mean_curve(),
        (None, Some(f)) => AccuracyCurve {
            params: vec![l.best_param],
            mean_auc: vec![f.val_mean],
            sd_auc: vec![f.val_sd],
        },
        (None, None) => AccuracyCurve {
            params: Vec::new(),
            mean_auc: Vec::new(),
            sd_auc: Vec::new(),
        },
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(p, e))
}

/// Runs `cfg` with relative paths taken from `base`; returns the report and
/// the output directory.
pub fn run_config(cfg: &PipelineConfig, base: &Path) -> std::result::Result<(RunReport, PathBuf), PipelineError> {
    cfg.validate().stage("config")?;
    let resolved: Vec<Resolved> = cfg.learners.iter().map(resolve).collect::<Result<_>>().stage("config")?;
    let tables = load_tables(cfg, base).stage("load")?;
    let prep = prepare(cfg, tables).stage("preprocess")?;

    let x = prep.matrix.values_with_nan().select(Axis(0), &prep.labeled);
    let y: Vec<bool> = prep.labeled.iter().map(|&i| prep.matrix.labels[i] == ClassLabel::Class1).collect();
    let ctx = Context {
        unlabeled: Arc::new(prep.matrix.values_with_nan().select(Axis(0), &prep.unlabeled)),
        views: default_views(&prep.matrix.groups, cfg.dataset),
        one_hot_columns: prep.matrix.groups.iter().filter(|g| g.one_hot).flat_map(|g| g.indices()).collect(),
    };
    let out = base.join(&cfg.out_dir);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e)).stage("report")?;

    let mut results = Vec::with_capacity(resolved.len());
    for (i, r) in resolved.iter().enumerate() {
        let t = tunable(r, &ctx);
        let res = evaluate(r, &t, &x, &y, &prep.split, derive_seed(cfg.seed, &[10, i as u64]))
            .stage(&format!("learner {}", r.name))?;
        let test_labels: Vec<bool> = prep.split.test_idx.iter().map(|&i| y[i]).collect();
        let scores = match (&res.cv, &res.fixed) {
            (Some(cv), _) => &cv.test_scores,
            (_, Some(f)) => &f.test_scores,
            _ => unreachable!("one evaluation is always present"),
        };
        let roc = roc_curve(scores, &test_labels).stage("report")?;
        write(&out, &res.roc_csv, &roc.to_csv()).stage("report")?;
        write(&out, &res.curve_csv, &curve_of(&res).to_csv()).stage("report")?;
        results.push(res);
    }

    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        dataset: cfg.dataset,
        patients: prep.matrix.n_rows(),
        labeled: prep.labeled.len(),
        unlabeled: prep.unlabeled.len(),
        features: prep.matrix.n_features(),
        split: SplitSizes {
            train: prep.split.train_idx.len(),
            val: prep.split.val_idx.len(),
            test: prep.split.test_idx.len(),
        },
        learners: results,
    };
    let json = serde_json::to_string_pretty(&report).map_err(Error::from).stage("report")?;
    write(&out, "report.json", &(json + "\n")).stage("report")?;
    write(&out, "table.md", &render_table(&report)).stage("report")?;
    let stamp = serde_json::json!({
        "version": report.version,
        "seed": cfg.seed,
        "threads": rayon::current_num_threads(),
        "timestamp_unix": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    });
    write(&out, "env.json", &(stamp.to_string() + "\n")).stage("report")?;
    Ok((report, out))
}

pub fn run_pipeline(config_path: &Path) -> std::result::Result<(RunReport, PathBuf), PipelineError> {
    let cfg = PipelineConfig::from_path(config_path).stage("config")?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    run_config(&cfg, base)
}

/// Reads `report.json` from `dir` and rewrites `table.md`.
pub fn rerender(dir: &Path) -> Result<String> {
    let p = dir.join("report.json");
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let report: RunReport = serde_json::from_str(&text)?;
    let table = render_table(&report);
    write(dir, "table.md", &table)?;
    Ok(table)
}

/// Writes generated tables, their schemas and a runnable config into `dir`.
pub fn write_synthetic(spec: &SynthSpec, dir: &Path) -> Result<SynthTables> {
    let t = generate_synthetic(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fmt = TableFormat::default();
    write_table(&t.clinical, &dir.join("clinical.tsv"), &fmt)?;
    write_table(&t.expression, &dir.join("expression.tsv"), &fmt)?;
    write_table(&t.cna, &dir.join("cna.tsv"), &fmt)?;
    write_table(&t.mutations, &dir.join("mutations.tsv"), &fmt)?;
    write(dir, "clinical_schema.toml", &SynthTables::clinical_schema().to_toml_string())?;
    let config = format!(
        "seed = {}\ndataset = \"genomic\"\nout_dir = \"out\"\n\n[data]\nclinical = \"clinical.tsv\"\nclinical_schema = \"clinical_schema.toml\"\nexpression = \"expression.tsv\"\ncna = \"cna.tsv\"\nmutations = \"mutations.tsv\"\n\n[[learners]]\nname = \"knn\"\n\n[[learners]]\nname = \"boost\"\n",
        spec.seed
    );
    write(dir, "config.toml", &config)?;
    Ok(t)
}
