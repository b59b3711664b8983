//! Synthetic clinical-like and genomic-like tables with a planted signal.
//!
//! A latent risk built from the first `informative` expression genes drives
//! the death-of-disease label. Tumor size, grade and the first CNA gene are
//! noisy functions of the same risk, so the clinical table carries some of
//! the signal too. With `informative = 0` every label is a coin flip.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Column, ColumnKind, ColumnSpec, SchemaSpec, TableFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub rows: usize,
    pub expression_genes: usize,
    pub cna_genes: usize,
    pub mutation_genes: usize,
    /// Expression genes that enter the latent risk.
    pub informative: usize,
    /// Scale of the latent risk on the log-odds axis.
    pub signal: f64,
    /// Share of Class1 among labeled patients when there is no signal.
    pub prevalence: f64,
    /// Probability that a label is flipped after sampling.
    pub label_noise: f64,
    /// Base missing rate of the clinical columns that can be missing.
    pub missing_rate: f64,
    /// Share of patients censored before the horizon.
    pub unlabeled_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            rows: 400,
            expression_genes: 100,
            cna_genes: 20,
            mutation_genes: 10,
            informative: 5,
            signal: 2.0,
            prevalence: 0.4,
            label_noise: 0.05,
            missing_rate: 0.05,
            unlabeled_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Reads and validates a TOML spec. Every failure is a config error.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let spec: SynthSpec = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 20 {
            return Err(Error::Validation(format!("synthetic data needs at least 20 rows, got {}", self.rows)));
        }
        if self.expression_genes == 0 {
            return Err(Error::Validation("expression_genes must be positive".into()));
        }
        if self.informative > self.expression_genes {
            return Err(Error::Validation(format!(
                "informative ({}) exceeds expression_genes ({})",
                self.informative, self.expression_genes
            )));
        }
        let unit = |v: f64, name: &str, hi: f64| {
            if (0.0..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} = {v} outside [0, {hi}]")))
            }
        };
        unit(self.label_noise, "label_noise", 0.5)?;
        unit(self.missing_rate, "missing_rate", 0.5)?;
        unit(self.unlabeled_fraction, "unlabeled_fraction", 0.9)?;
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::Validation(format!("prevalence = {} outside (0, 1)", self.prevalence)));
        }
        if !self.signal.is_finite() {
            return Err(Error::Validation("signal must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTables {
    pub clinical: TableFrame,
    pub expression: TableFrame,
    pub cna: TableFrame,
    pub mutations: TableFrame,
    /// Names of the expression genes in the latent risk.
    pub informative_genes: Vec<String>,
}

impl SynthTables {
    pub fn clinical_schema() -> SchemaSpec {
        let col = |name: &str, kind| ColumnSpec {
            name: name.into(),
            kind,
            categories: None,
        };
        use ColumnKind::*;
        SchemaSpec {
            columns: vec![
                col("PATIENT_ID", Identifier),
                col("AGE_AT_DIAGNOSIS", Numeric),
                col("TUMOR_SIZE", Numeric),
                col("GRADE", Categorical),
                col("ER_STATUS", Categorical),
                col("PR_STATUS", Categorical),
                col("CHEMOTHERAPY", Categorical),
                col("CELLULARITY", Categorical),
                col("OS_MONTHS", Numeric),
                col("OS_STATUS", Categorical),
                col("VITAL_STATUS", Categorical),
            ],
            default_kind: None,
        }
    }

    /// Schema for a wide genomic table: the id column plus `default_kind`.
    pub fn wide_schema(default_kind: ColumnKind) -> SchemaSpec {
        SchemaSpec {
            columns: vec![ColumnSpec {
                name: "PATIENT_ID".into(),
                kind: ColumnKind::Identifier,
                categories: None,
            }],
            default_kind: Some(default_kind),
        }
    }
}

const VARIANTS: [&str; 3] = ["Missense_Mutation", "Nonsense_Mutation", "Frame_Shift_Del"];

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options[rng.random_range(0..options.len())]
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthTables> {
    spec.validate()?;
    let n = spec.rows;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let ids: Vec<String> = (0..n).map(|i| format!("P{:05}", i + 1)).collect();

    let expr: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..spec.expression_genes).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    // standardized latent risk; zero without informative genes
    let risk: Vec<f64> = expr
        .iter()
        .map(|e| {
            if spec.informative == 0 {
                return 0.0;
            }
            let s: f64 = (0..spec.informative)
                .map(|j| if j % 2 == 0 { e[j] } else { -e[j] })
                .sum();
            s / (spec.informative as f64).sqrt()
        })
        .collect();
    let intercept = (spec.prevalence / (1.0 - spec.prevalence)).ln();
    let class1: Vec<bool> = risk
        .iter()
        .map(|&r| {
            let p = crate::linear::sigmoid(intercept + spec.signal * r);
            let y = rng.random::<f64>() < p;
            y ^ (rng.random::<f64>() < spec.label_noise)
        })
        .collect();
    let censored: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < spec.unlabeled_fraction).collect();

    // clinical covariates
    let age: Vec<f64> = (0..n)
        .map(|_| (60.0 + 12.0 * normal.sample(&mut rng)).clamp(25.0, 95.0))
        .collect();
    let size: Vec<f64> = risk
        .iter()
        .map(|&r| (3.0 + 0.25 * (0.6 * r + normal.sample(&mut rng))).exp())
        .collect();
    let grade: Vec<&str> = risk
        .iter()
        .map(|&r| {
            let g = 0.7 * r + normal.sample(&mut rng);
            if g < -0.5 {
                "1"
            } else if g < 0.7 {
                "2"
            } else {
                "3"
            }
        })
        .collect();
    let er: Vec<&str> = (0..n).map(|_| if rng.random::<f64>() < 0.75 { "Positive" } else { "Negative" }).collect();
    let pr: Vec<&str> = er
        .iter()
        .map(|&e| {
            let p = if e == "Positive" { 0.7 } else { 0.15 };
            if rng.random::<f64>() < p { "Positive" } else { "Negative" }
        })
        .collect();
    let chemo: Vec<&str> = (0..n).map(|_| if rng.random::<f64>() < 0.3 { "YES" } else { "NO" }).collect();
    let cellularity: Vec<&str> = (0..n).map(|_| pick(&mut rng, &["Low", "Moderate", "High"])).collect();

    // missing at random: rates depend on observed age or chemotherapy
    let rate = spec.missing_rate;
    let mut miss = |p: f64| rate > 0.0 && rng.random::<f64>() < p;
    let mut size_missing = vec![false; n];
    let mut grade_missing = vec![false; n];
    let mut receptor_missing = vec![false; n];
    let mut cell_missing = vec![false; n];
    for i in 0..n {
        let older = if age[i] > 65.0 { 1.5 } else { 0.5 };
        size_missing[i] = miss(rate * older * 0.5);
        grade_missing[i] = miss(rate * older);
        receptor_missing[i] = miss(rate);
        cell_missing[i] = miss(if chemo[i] == "YES" { 1.6 * rate } else { 0.75 * rate });
    }
    let opt_num = |v: &[f64], m: &[bool]| -> Vec<Option<f64>> { v.iter().zip(m).map(|(&x, &mi)| (!mi).then_some(x)).collect() };
    let opt_txt = |v: &[&str], m: &[bool]| -> Vec<Option<String>> {
        v.iter().zip(m).map(|(&x, &mi)| (!mi).then(|| x.to_string())).collect()
    };
    let none = vec![false; n];

    let mut months = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    let mut vital = Vec::with_capacity(n);
    for i in 0..n {
        if censored[i] {
            months.push(rng.random_range(1.0..119.0f64).round());
            status.push("LIVING");
            vital.push("Living");
        } else if class1[i] {
            months.push(rng.random_range(1.0..=120.0f64).round());
            status.push("DECEASED");
            vital.push("Died of Disease");
        } else {
            months.push(rng.random_range(121.0..330.0f64).round());
            if rng.random::<f64>() < 0.4 {
                status.push("DECEASED");
                vital.push("Died of Other Causes");
            } else {
                status.push("LIVING");
                vital.push("Living");
            }
        }
    }

    let clinical = TableFrame::new(vec![
        Column::identifier("PATIENT_ID", ids.clone()),
        Column::numeric("AGE_AT_DIAGNOSIS", opt_num(&age, &none)),
        Column::numeric("TUMOR_SIZE", opt_num(&size, &size_missing)),
        Column::categorical("GRADE", opt_txt(&grade, &grade_missing)),
        Column::categorical("ER_STATUS", opt_txt(&er, &receptor_missing)),
        Column::categorical("PR_STATUS", opt_txt(&pr, &receptor_missing)),
        Column::categorical("CHEMOTHERAPY", opt_txt(&chemo, &none)),
        Column::categorical("CELLULARITY", opt_txt(&cellularity, &cell_missing)),
        Column::numeric("OS_MONTHS", opt_num(&months, &none)),
        Column::categorical("OS_STATUS", opt_txt(&status, &none)),
        Column::categorical("VITAL_STATUS", opt_txt(&vital, &none)),
    ])?;

    let gene = |prefix: &str, j: usize| format!("{prefix}{:04}", j + 1);
    let mut expr_cols = vec![Column::identifier("PATIENT_ID", ids.clone())];
    for j in 0..spec.expression_genes {
        expr_cols.push(Column::numeric(
            gene("EXPR_", j),
            expr.iter().map(|e| Some(6.0 + 1.5 * e[j])).collect(),
        ));
    }
    let expression = TableFrame::new(expr_cols)?;

    // a few patients lack copy-number data
    let cna_rows: Vec<usize> = (0..n).filter(|i| i % 50 != 49).collect();
    let mut cna_cols = vec![Column::identifier("PATIENT_ID", cna_rows.iter().map(|&i| ids[i].clone()).collect())];
    for j in 0..spec.cna_genes {
        let vals = cna_rows
            .iter()
            .map(|&i| {
                let lean = if j == 0 { 0.6 * risk[i] } else { 0.0 };
                let v = (lean + 0.7 * normal.sample(&mut rng)).round().clamp(-2.0, 2.0);
                // adding zero turns -0 into 0
                Some(v + 0.0)
            })
            .collect();
        cna_cols.push(Column::numeric(gene("CNA_", j), vals));
    }
    let cna = TableFrame::new(cna_cols)?;

    let mut mut_cols = vec![Column::identifier("PATIENT_ID", ids.clone())];
    for j in 0..spec.mutation_genes {
        let vals = (0..n)
            .map(|_| {
                let v = if rng.random::<f64>() < 0.8 { "WT" } else { pick(&mut rng, &VARIANTS) };
                Some(v.to_string())
            })
            .collect();
        mut_cols.push(Column::categorical(gene("MUT_", j), vals));
    }
    let mutations = TableFrame::new(mut_cols)?;

    Ok(SynthTables {
        clinical,
        expression,
        cna,
        mutations,
        informative_genes: (0..spec.informative).map(|j| gene("EXPR_", j)).collect(),
    })
}
