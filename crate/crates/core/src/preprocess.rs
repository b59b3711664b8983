//! Label derivation, row deletion, one-hot encoding, standardization and
//! missingness diagnostics for the clinical and genomic tables.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{ColumnKind, TableFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    /// Died of the disease within the horizon. Positive class.
    Class1,
    /// Last seen after the horizon.
    Class2,
    Unlabeled,
}

impl ClassLabel {
    pub fn as_binary(self) -> Option<bool> {
        match self {
            ClassLabel::Class1 => Some(true),
            ClassLabel::Class2 => Some(false),
            ClassLabel::Unlabeled => None,
        }
    }
}

/// Horizon plus the response columns and tokens used to label patients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelRule {
    pub horizon_months: f64,
    pub months_column: String,
    pub status_column: String,
    pub cause_column: String,
    /// Status values meaning the patient died.
    pub dead_tokens: Vec<String>,
    /// Cause-of-death values meaning the disease itself.
    pub disease_tokens: Vec<String>,
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule {
            horizon_months: 120.0,
            months_column: "OS_MONTHS".into(),
            status_column: "OS_STATUS".into(),
            cause_column: "VITAL_STATUS".into(),
            dead_tokens: vec!["DECEASED".into(), "dead".into(), "1:DECEASED".into()],
            disease_tokens: vec!["Died of Disease".into(), "disease".into()],
        }
    }
}

impl LabelRule {
    pub fn response_columns(&self) -> [&str; 3] {
        [&self.months_column, &self.status_column, &self.cause_column]
    }

    fn matches(tokens: &[String], value: &str) -> bool {
        let v = value.trim();
        tokens.iter().any(|t| t.trim().eq_ignore_ascii_case(v))
    }
}

pub fn assign_labels(
    survival_months: &[f64],
    status: &[String],
    cause: &[String],
    rule: &LabelRule,
) -> Result<Vec<ClassLabel>> {
    if rule.horizon_months <= 0.0 || !rule.horizon_months.is_finite() {
        return Err(Error::Validation("horizon_months must be positive".into()));
    }
    if survival_months.len() != status.len() || status.len() != cause.len() {
        return Err(Error::Validation(
            "survival, status and cause vectors differ in length".into(),
        ));
    }
    survival_months
        .iter()
        .zip(status)
        .zip(cause)
        .enumerate()
        .map(|(i, ((&t, s), c))| {
            if !(t >= 0.0) {
                return Err(Error::Validation(format!(
                    "survival time at row {} is {t}; must be non-negative",
                    i + 1
                )));
            }
            let dead_of_disease =
                LabelRule::matches(&rule.dead_tokens, s) && LabelRule::matches(&rule.disease_tokens, c);
            Ok(if t > rule.horizon_months {
                ClassLabel::Class2
            } else if dead_of_disease {
                ClassLabel::Class1
            } else {
                ClassLabel::Unlabeled
            })
        })
        .collect()
}

/// Rows kept by the deletion policy: no missing numeric cell and at most two
/// missing cells overall. Identifier columns never count.
pub fn drop_policy_rows(frame: &TableFrame) -> Vec<usize> {
    let cols: Vec<_> = frame
        .columns()
        .iter()
        .filter(|c| c.kind() != ColumnKind::Identifier)
        .collect();
    (0..frame.n_rows())
        .filter(|&r| {
            let mut total = 0;
            for c in &cols {
                if c.missing()[r] {
                    if c.kind() == ColumnKind::Numeric {
                        return false;
                    }
                    total += 1;
                }
            }
            total <= 2
        })
        .collect()
}

pub fn apply_drop_policy(frame: &TableFrame) -> TableFrame {
    frame.select_rows(&drop_policy_rows(frame))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdDivisor {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn transform(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }
}

pub fn fit_standardizer(column: &[f64], divisor: StdDivisor) -> Result<Standardizer> {
    if column.is_empty() {
        return Err(Error::Validation("cannot standardize an empty column".into()));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("standardizer input must be finite".into()));
    }
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let ss: f64 = column.iter().map(|v| (v - mean).powi(2)).sum();
    let denom = match divisor {
        StdDivisor::Population => n,
        StdDivisor::Sample => (n - 1.0).max(1.0),
    };
    let sd = (ss / denom).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    Ok(Standardizer { mean, scale })
}

/// How one source column becomes one or more output features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum ColumnEncoding {
    OneHot {
        column: String,
        categories: Vec<String>,
        null_category: bool,
    },
    Standardize {
        column: String,
        standardizer: Standardizer,
    },
}

impl ColumnEncoding {
    pub fn column(&self) -> &str {
        match self {
            ColumnEncoding::OneHot { column, .. } | ColumnEncoding::Standardize { column, .. } => column,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            ColumnEncoding::OneHot {
                categories,
                null_category,
                ..
            } => categories.len() + usize::from(*null_category),
            ColumnEncoding::Standardize { .. } => 1,
        }
    }

    fn feature_names(&self, prefix: &str) -> Vec<String> {
        match self {
            ColumnEncoding::OneHot {
                column,
                categories,
                null_category,
            } => {
                let mut names: Vec<String> = categories
                    .iter()
                    .map(|c| format!("{prefix}{column}={c}"))
                    .collect();
                if *null_category {
                    names.push(format!("{prefix}{column}=<null>"));
                }
                names
            }
            ColumnEncoding::Standardize { column, .. } => vec![format!("{prefix}{column}")],
        }
    }
}

/// The encoded columns of one original variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
    pub one_hot: bool,
}

impl FeatureGroup {
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Fitted encodings: one-hot spans first, then standardized numerics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderPlan {
    pub encodings: Vec<ColumnEncoding>,
    #[serde(default)]
    pub prefix: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EncoderOptions {
    pub divisor: StdDivisor,
}

/// Fits categories and standardizers on `frame`, which should hold training
/// rows only. Categories keep first-appearance order.
pub fn fit_encoder(frame: &TableFrame, opts: EncoderOptions) -> Result<EncoderPlan> {
    let mut one_hot = Vec::new();
    let mut numeric = Vec::new();
    for col in frame.columns() {
        match col.kind() {
            ColumnKind::Identifier => {}
            ColumnKind::Categorical => {
                let values = col.as_text().expect("categorical column holds text");
                let mut seen = HashSet::new();
                let mut categories = Vec::new();
                for (v, &m) in values.iter().zip(col.missing()) {
                    if !m && seen.insert(v.as_str()) {
                        categories.push(v.clone());
                    }
                }
                if categories.is_empty() {
                    return Err(Error::Validation(format!(
                        "categorical column `{}` has no observed categories",
                        col.name()
                    )));
                }
                one_hot.push(ColumnEncoding::OneHot {
                    column: col.name().to_string(),
                    categories,
                    null_category: col.missing_count() > 0,
                });
            }
            ColumnKind::Numeric => {
                let values = col.as_numeric().expect("numeric column holds numbers");
                let observed: Vec<f64> = values
                    .iter()
                    .zip(col.missing())
                    .filter(|(_, &m)| !m)
                    .map(|(&v, _)| v)
                    .collect();
                let standardizer = fit_standardizer(&observed, opts.divisor).map_err(|e| {
                    Error::Validation(format!("column `{}`: {e}", col.name()))
                })?;
                numeric.push(ColumnEncoding::Standardize {
                    column: col.name().to_string(),
                    standardizer,
                });
            }
        }
    }
    one_hot.extend(numeric);
    Ok(EncoderPlan {
        encodings: one_hot,
        prefix: String::new(),
    })
}

/// Encoded feature block produced by [`EncoderPlan::transform`].
#[derive(Debug, Clone)]
pub struct EncodedBlock {
    pub values: Array2<f64>,
    pub missing: Option<Array2<bool>>,
    pub feature_names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
}

impl EncoderPlan {
    pub fn width(&self) -> usize {
        self.encodings.iter().map(ColumnEncoding::width).sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.encodings
            .iter()
            .flat_map(|e| e.feature_names(&self.prefix))
            .collect()
    }

    pub fn groups(&self) -> Vec<FeatureGroup> {
        let mut start = 0;
        self.encodings
            .iter()
            .map(|e| {
                let g = FeatureGroup {
                    name: format!("{}{}", self.prefix, e.column()),
                    start,
                    len: e.width(),
                    one_hot: matches!(e, ColumnEncoding::OneHot { .. }),
                };
                start += g.len;
                g
            })
            .collect()
    }

    /// Encodes every row of `frame`. Unseen categories (and missing cells
    /// without a fitted null category) become an all-zero span. Missing
    /// numeric cells are kept as `NaN` and reported through the mask.
    pub fn transform(&self, frame: &TableFrame) -> Result<EncodedBlock> {
        let n = frame.n_rows();
        let mut values = Array2::<f64>::zeros((n, self.width()));
        let mut mask: Option<Array2<bool>> = None;
        let mut offset = 0;
        for enc in &self.encodings {
            let col = frame.column(enc.column()).ok_or_else(|| {
                Error::Schema(format!("column `{}` required by the encoder is absent", enc.column()))
            })?;
            match enc {
                ColumnEncoding::OneHot {
                    categories,
                    null_category,
                    ..
                } => {
                    let text = col.as_text().ok_or_else(|| {
                        Error::Schema(format!("column `{}` is not categorical", enc.column()))
                    })?;
                    let index: HashMap<&str, usize> = categories
                        .iter()
                        .enumerate()
                        .map(|(i, c)| (c.as_str(), i))
                        .collect();
                    for r in 0..n {
                        let slot = if col.missing()[r] {
                            null_category.then_some(categories.len())
                        } else {
                            index.get(text[r].as_str()).copied()
                        };
                        if let Some(k) = slot {
                            values[[r, offset + k]] = 1.0;
                        }
                    }
                }
                ColumnEncoding::Standardize { standardizer, .. } => {
                    let nums = col.as_numeric().ok_or_else(|| {
                        Error::Schema(format!("column `{}` is not numeric", enc.column()))
                    })?;
                    for r in 0..n {
                        if col.missing()[r] {
                            values[[r, offset]] = f64::NAN;
                            mask.get_or_insert_with(|| Array2::from_elem((n, self.width()), false))
                                [[r, offset]] = true;
                        } else {
                            values[[r, offset]] = standardizer.transform(nums[r]);
                        }
                    }
                }
            }
            offset += enc.width();
        }
        Ok(EncodedBlock {
            values,
            missing: mask,
            feature_names: self.feature_names(),
            groups: self.groups(),
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        save_json(self, path)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        load_json(path)
    }
}

/// Dense feature matrix aligned with labels and patient ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: Array2<f64>,
    pub missing_mask: Option<Array2<bool>>,
    pub feature_names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
    pub labels: Vec<ClassLabel>,
    pub patient_ids: Vec<String>,
}

impl DesignMatrix {
    pub fn new(
        values: Array2<f64>,
        feature_names: Vec<String>,
        labels: Vec<ClassLabel>,
        patient_ids: Vec<String>,
    ) -> Result<Self> {
        let groups = feature_names
            .iter()
            .enumerate()
            .map(|(i, n)| FeatureGroup {
                name: n.clone(),
                start: i,
                len: 1,
                one_hot: false,
            })
            .collect();
        let dm = DesignMatrix {
            values,
            missing_mask: None,
            feature_names,
            groups,
            labels,
            patient_ids,
        };
        dm.check()?;
        Ok(dm)
    }

    pub fn check(&self) -> Result<()> {
        let (rows, cols) = self.values.dim();
        if self.labels.len() != rows || self.patient_ids.len() != rows {
            return Err(Error::Integrity(format!(
                "design matrix has {rows} rows but {} labels and {} ids",
                self.labels.len(),
                self.patient_ids.len()
            )));
        }
        if self.feature_names.len() != cols {
            return Err(Error::Integrity(format!(
                "{} feature names for {cols} columns",
                self.feature_names.len()
            )));
        }
        if let Some(m) = &self.missing_mask {
            if m.dim() != (rows, cols) {
                return Err(Error::Integrity("missing mask shape mismatch".into()));
            }
        } else if self.values.iter().any(|v| v.is_nan()) {
            return Err(Error::Integrity("NaN cell without a missing mask".into()));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Row indices whose label is Class1 or Class2.
    pub fn labeled_rows(&self) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&r| self.labels[r] != ClassLabel::Unlabeled)
            .collect()
    }

    pub fn unlabeled_rows(&self) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&r| self.labels[r] == ClassLabel::Unlabeled)
            .collect()
    }

    /// Values with missing cells set to `NaN`, the booster's input form.
    pub fn values_with_nan(&self) -> Array2<f64> {
        let mut v = self.values.clone();
        if let Some(mask) = &self.missing_mask {
            v.zip_mut_with(mask, |x, &m| {
                if m {
                    *x = f64::NAN;
                }
            });
        }
        v
    }

    /// Mask marking zeros inside one-hot spans as missing, merged with any
    /// existing mask. Used by the booster's optional sparse mode.
    pub fn sparse_one_hot_mask(&self) -> Array2<bool> {
        let mut mask = self
            .missing_mask
            .clone()
            .unwrap_or_else(|| Array2::from_elem(self.values.dim(), false));
        for g in self.groups.iter().filter(|g| g.one_hot) {
            for c in g.indices() {
                for r in 0..self.n_rows() {
                    if self.values[[r, c]] == 0.0 {
                        mask[[r, c]] = true;
                    }
                }
            }
        }
        mask
    }
}

/// Extracts labels from the response columns of `frame`.
pub fn labels_from_frame(frame: &TableFrame, rule: &LabelRule) -> Result<Vec<ClassLabel>> {
    let months_col = frame.column(&rule.months_column).ok_or_else(|| {
        Error::Schema(format!("response column `{}` is absent", rule.months_column))
    })?;
    let text = |name: &str| -> Result<Vec<String>> {
        let c = frame
            .column(name)
            .ok_or_else(|| Error::Schema(format!("response column `{name}` is absent")))?;
        Ok((0..frame.n_rows())
            .map(|r| c.cell_text(r).unwrap_or_default())
            .collect())
    };
    let status = text(&rule.status_column)?;
    let cause = text(&rule.cause_column)?;
    let months = months_col
        .as_numeric()
        .ok_or_else(|| Error::Schema(format!("`{}` must be numeric", rule.months_column)))?;
    // Rows with an unknown survival time cannot be labeled.
    let known: Vec<usize> = (0..frame.n_rows())
        .filter(|&r| !months_col.missing()[r])
        .collect();
    let sub = assign_labels(
        &known.iter().map(|&r| months[r]).collect::<Vec<_>>(),
        &known.iter().map(|&r| status[r].clone()).collect::<Vec<_>>(),
        &known.iter().map(|&r| cause[r].clone()).collect::<Vec<_>>(),
        rule,
    )?;
    let mut labels = vec![ClassLabel::Unlabeled; frame.n_rows()];
    for (r, l) in known.into_iter().zip(sub) {
        labels[r] = l;
    }
    Ok(labels)
}

/// Drops the response columns, returning only explanatory variables.
pub fn explanatory_columns(frame: &TableFrame, rule: &LabelRule) -> TableFrame {
    frame.without_columns(&rule.response_columns())
}

/// Encodes the explanatory columns of `frame` with `plan` and attaches labels
/// derived from the response columns.
pub fn build_clinical_matrix(
    frame: &TableFrame,
    rule: &LabelRule,
    plan: &EncoderPlan,
) -> Result<DesignMatrix> {
    for name in rule.response_columns() {
        if frame.column(name).is_none() {
            return Err(Error::Schema(format!("response column `{name}` is absent")));
        }
    }
    let response: HashSet<&str> = rule.response_columns().into_iter().collect();
    if let Some(enc) = plan.encodings.iter().find(|e| response.contains(e.column())) {
        return Err(Error::Validation(format!(
            "encoder plan uses response column `{}` as a feature",
            enc.column()
        )));
    }
    let labels = labels_from_frame(frame, rule)?;
    let block = plan.transform(frame)?;
    let dm = DesignMatrix {
        values: block.values,
        missing_mask: block.missing,
        feature_names: block.feature_names,
        groups: block.groups,
        labels,
        patient_ids: frame.patient_ids().to_vec(),
    };
    dm.check()?;
    Ok(dm)
}

fn parse_cna(raw: &str, column: &str) -> Result<i8> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Validation(format!(
        "CNA column `{column}` holds non-numeric value `{raw}`"
    )))?;
    if v.fract() != 0.0 || !(-2.0..=2.0).contains(&v) {
        return Err(Error::Validation(format!(
            "CNA column `{column}` holds {v}; expected an integer in [-2, 2]"
        )));
    }
    Ok(v as i8)
}

/// Fitted genomic encoding: expression standardizers, CNA and mutation
/// one-hot categories. Columns with any missing cell are excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenomicPlan {
    pub expression: EncoderPlan,
    pub cna: EncoderPlan,
    pub mutations: EncoderPlan,
}

fn complete_columns(frame: &TableFrame) -> Vec<&str> {
    frame
        .columns()
        .iter()
        .filter(|c| c.kind() != ColumnKind::Identifier && c.missing_count() == 0)
        .map(|c| c.name())
        .collect()
}

fn cna_as_categorical(frame: &TableFrame) -> Result<TableFrame> {
    use crate::table::Column;
    let mut cols = vec![frame.id_column().clone()];
    for c in frame.columns().iter().filter(|c| c.kind() != ColumnKind::Identifier) {
        let vals: Vec<Option<String>> = (0..frame.n_rows())
            .map(|r| {
                c.cell_text(r)
                    .map(|t| parse_cna(&t, c.name()).map(|v| v.to_string()))
                    .transpose()
            })
            .collect::<Result<_>>()?;
        cols.push(Column::categorical(c.name(), vals));
    }
    TableFrame::new(cols)
}

impl GenomicPlan {
    /// Fits on the rows `fit_rows` of already-intersected frames.
    pub fn fit(
        expression: &TableFrame,
        cna: &TableFrame,
        mutations: &TableFrame,
        fit_rows: &[usize],
        opts: EncoderOptions,
    ) -> Result<Self> {
        if expression.patient_ids() != cna.patient_ids()
            || expression.patient_ids() != mutations.patient_ids()
        {
            return Err(Error::Integrity(
                "genomic frames must share patients in the same order; intersect them first".into(),
            ));
        }
        let expr = expression.select_columns(&complete_columns(expression))?;
        if let Some(c) = expr.columns().iter().find(|c| c.kind() == ColumnKind::Categorical) {
            return Err(Error::Schema(format!("expression column `{}` must be numeric", c.name())));
        }
        let mut expression_plan = fit_encoder(&expr.select_rows(fit_rows), opts)?;
        expression_plan.prefix = "expr:".into();

        let cna_cat = cna_as_categorical(&cna.select_columns(&complete_columns(cna))?)?;
        let mut cna_plan = fit_encoder(&cna_cat.select_rows(fit_rows), opts)?;
        for enc in &mut cna_plan.encodings {
            if let ColumnEncoding::OneHot { categories, .. } = enc {
                categories.sort_by_key(|c| c.parse::<i8>().unwrap_or(0));
            }
        }
        cna_plan.prefix = "cna:".into();

        let muts = mutations.select_columns(&complete_columns(mutations))?;
        if let Some(c) = muts.columns().iter().find(|c| c.kind() == ColumnKind::Numeric) {
            return Err(Error::Schema(format!(
                "mutation column `{}` must hold categorical variant classifications",
                c.name()
            )));
        }
        let mut mutation_plan = fit_encoder(&muts.select_rows(fit_rows), opts)?;
        mutation_plan.prefix = "mut:".into();

        let plan = GenomicPlan {
            expression: expression_plan,
            cna: cna_plan,
            mutations: mutation_plan,
        };
        if plan.width() == 0 {
            return Err(Error::Validation("no genomic column survived preprocessing".into()));
        }
        Ok(plan)
    }

    pub fn width(&self) -> usize {
        self.expression.width() + self.cna.width() + self.mutations.width()
    }

    pub fn transform(
        &self,
        expression: &TableFrame,
        cna: &TableFrame,
        mutations: &TableFrame,
        labels: Vec<ClassLabel>,
    ) -> Result<DesignMatrix> {
        let blocks = [
            self.expression.transform(expression)?,
            self.cna.transform(&cna_as_categorical(
                &cna.select_columns(&self.cna.encodings.iter().map(|e| e.column()).collect::<Vec<_>>())?,
            )?)?,
            self.mutations.transform(mutations)?,
        ];
        let n = expression.n_rows();
        let width = self.width();
        let mut values = Array2::<f64>::zeros((n, width));
        let mut feature_names = Vec::with_capacity(width);
        let mut groups = Vec::new();
        let mut offset = 0;
        for b in blocks {
            if b.missing.is_some() {
                return Err(Error::Validation(
                    "genomic rows to transform contain missing cells in kept columns".into(),
                ));
            }
            let w = b.values.ncols();
            values
                .slice_mut(ndarray::s![.., offset..offset + w])
                .assign(&b.values);
            feature_names.extend(b.feature_names);
            groups.extend(b.groups.into_iter().map(|mut g| {
                g.start += offset;
                g
            }));
            offset += w;
        }
        let dm = DesignMatrix {
            values,
            missing_mask: None,
            feature_names,
            groups,
            labels,
            patient_ids: expression.patient_ids().to_vec(),
        };
        dm.check()?;
        Ok(dm)
    }
}

/// Fits a [`GenomicPlan`] on `fit_rows` and encodes every row.
pub fn build_genomic_matrix(
    expression: &TableFrame,
    cna: &TableFrame,
    mutations: &TableFrame,
    fit_rows: &[usize],
    labels: Vec<ClassLabel>,
    opts: EncoderOptions,
) -> Result<(GenomicPlan, DesignMatrix)> {
    let plan = GenomicPlan::fit(expression, cna, mutations, fit_rows, opts)?;
    let dm = plan.transform(expression, cna, mutations, labels)?;
    Ok((plan, dm))
}

/// Square matrix with row/column labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl LabeledMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("column");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (n, row) in self.names.iter().zip(&self.values) {
            out.push_str(n);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Pearson correlation of the missingness indicators of every pair of columns
/// that have at least `min_missing` missing cells and a non-constant indicator.
pub fn nullity_correlation(frame: &TableFrame, min_missing: usize) -> LabeledMatrix {
    let n = frame.n_rows();
    let kept: Vec<_> = frame
        .columns()
        .iter()
        .filter(|c| c.kind() != ColumnKind::Identifier)
        .filter(|c| {
            let m = c.missing_count();
            m >= min_missing.max(1) && m < n
        })
        .collect();
    let indicators: Vec<Vec<f64>> = kept
        .iter()
        .map(|c| c.missing().iter().map(|&m| f64::from(u8::from(m))).collect())
        .collect();
    let k = kept.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = if i == j { 1.0 } else { pearson(&indicators[i], &indicators[j]) };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    LabeledMatrix {
        names: kept.iter().map(|c| c.name().to_string()).collect(),
        values,
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(FiveNumber {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Five-number summaries of `target_column` split by whether
/// `null_column` is missing. Returns `(missing_group, present_group)`.
pub fn nullity_group_stats(
    frame: &TableFrame,
    null_column: &str,
    target_column: &str,
) -> Result<(FiveNumber, FiveNumber)> {
    let null_col = frame
        .column(null_column)
        .ok_or_else(|| Error::Schema(format!("unknown column `{null_column}`")))?;
    let target = frame
        .column(target_column)
        .ok_or_else(|| Error::Schema(format!("unknown column `{target_column}`")))?;
    let values = target
        .as_numeric()
        .ok_or_else(|| Error::Validation(format!("`{target_column}` is not numeric")))?;
    let mut missing_group = Vec::new();
    let mut present_group = Vec::new();
    for ((&v, &gone), &null) in values.iter().zip(target.missing()).zip(null_col.missing()) {
        if gone {
            continue;
        }
        if null {
            missing_group.push(v);
        } else {
            present_group.push(v);
        }
    }
    let missing = FiveNumber::of(&missing_group).ok_or_else(|| {
        Error::Validation(format!("group where `{null_column}` is missing is empty"))
    })?;
    let present = FiveNumber::of(&present_group).ok_or_else(|| {
        Error::Validation(format!("group where `{null_column}` is present is empty"))
    })?;
    Ok((missing, present))
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;
    use approx::assert_abs_diff_eq;

    fn s(v: &str) -> String {
        v.to_string()
    }

    fn rule() -> LabelRule {
        LabelRule {
            horizon_months: 120.0,
            months_column: s("months"),
            status_column: s("status"),
            cause_column: s("cause"),
            dead_tokens: vec![s("dead")],
            disease_tokens: vec![s("disease")],
        }
    }

    #[test]
    fn label_truth_table() {
        let labels = assign_labels(
            &[60.0, 150.0, 60.0, 120.0, 60.0, 200.0],
            &[s("dead"), s("living"), s("living"), s("DEAD"), s("dead"), s("dead")],
            &[s("disease"), s(""), s(""), s("Disease"), s("other"), s("disease")],
            &rule(),
        )
        .unwrap();
        use ClassLabel::*;
        assert_eq!(labels, vec![Class1, Class2, Unlabeled, Class1, Unlabeled, Class2]);
    }

    #[test]
    fn negative_months_rejected() {
        assert!(assign_labels(&[-1.0], &[s("dead")], &[s("disease")], &rule()).is_err());
    }

    fn frame_with_missing() -> TableFrame {
        TableFrame::new(vec![
            Column::identifier("id", vec!["a", "b", "c", "d"]),
            Column::numeric("n", vec![Some(1.0), None, Some(3.0), Some(4.0)]),
            Column::categorical("c1", vec![Some("x"), Some("y"), None, None]),
            Column::categorical("c2", vec![Some("x"), Some("y"), None, Some("x")]),
            Column::categorical("c3", vec![Some("x"), Some("y"), None, Some("z")]),
        ])
        .unwrap()
    }

    #[test]
    fn drop_policy_filters_rows() {
        let f = apply_drop_policy(&frame_with_missing());
        // b: missing numeric; c: 3 missing categoricals; d: 1 missing categorical
        assert_eq!(f.patient_ids(), &[s("a"), s("d")]);
        assert_eq!(f.column("n").unwrap().as_numeric().unwrap(), &[1.0, 4.0]);
    }

    #[test]
    fn null_category_appended_when_missing() {
        let f = TableFrame::new(vec![
            Column::identifier("id", vec!["1", "2", "3"]),
            Column::categorical("g", vec![Some("A"), Some("B"), None]),
        ])
        .unwrap();
        let plan = fit_encoder(&f, EncoderOptions::default()).unwrap();
        assert_eq!(plan.width(), 3);
        let block = plan.transform(&f).unwrap();
        assert_eq!(block.values.row(2).to_vec(), vec![0.0, 0.0, 1.0]);
        assert_eq!(block.feature_names[2], "g=<null>");
    }

    #[test]
    fn single_category_has_width_one() {
        let f = TableFrame::new(vec![
            Column::identifier("id", vec!["1", "2", "3"]),
            Column::categorical("g", vec![Some("A"), Some("A"), Some("A")]),
        ])
        .unwrap();
        let block = fit_encoder(&f, EncoderOptions::default())
            .unwrap()
            .transform(&f)
            .unwrap();
        assert_eq!(block.values.dim(), (3, 1));
        assert!(block.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn all_missing_categorical_is_error() {
        let f = TableFrame::new(vec![
            Column::identifier("id", vec!["1"]),
            Column::categorical::<&str>("g", vec![None]),
        ])
        .unwrap();
        assert!(fit_encoder(&f, EncoderOptions::default()).is_err());
    }

    #[test]
    fn unseen_category_encodes_as_zero_span() {
        let train = TableFrame::new(vec![
            Column::identifier("id", vec!["1", "2"]),
            Column::categorical("g", vec![Some("A"), Some("B")]),
        ])
        .unwrap();
        let test = TableFrame::new(vec![
            Column::identifier("id", vec!["3"]),
            Column::categorical("g", vec![Some("C")]),
        ])
        .unwrap();
        let plan = fit_encoder(&train, EncoderOptions::default()).unwrap();
        let block = plan.transform(&test).unwrap();
        assert_eq!(block.values.dim(), (1, 2));
        assert!(block.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardizer_uses_population_sd() {
        let st = fit_standardizer(&[1.0, 2.0, 3.0], StdDivisor::Population).unwrap();
        assert_abs_diff_eq!(st.mean, 2.0);
        assert_abs_diff_eq!(st.scale, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(st.transform(1.0), -1.224_744_871_391_589, epsilon = 1e-12);
        assert_abs_diff_eq!(st.transform(3.0), 1.224_744_871_391_589, epsilon = 1e-12);
        assert_eq!(st.transform(st.mean), 0.0);
        let sample = fit_standardizer(&[1.0, 2.0, 3.0], StdDivisor::Sample).unwrap();
        assert_abs_diff_eq!(sample.scale, 1.0);
    }

    #[test]
    fn zero_variance_standardizes_to_zero() {
        let st = fit_standardizer(&[5.0, 5.0, 5.0], StdDivisor::Population).unwrap();
        assert_eq!(st.scale, 1.0);
        assert_eq!(st.transform(5.0), 0.0);
        assert!(fit_standardizer(&[], StdDivisor::Population).is_err());
    }

    fn clinical_frame() -> TableFrame {
        TableFrame::new(vec![
            Column::identifier("id", vec!["p1", "p2", "p3"]),
            Column::categorical("stage", vec![Some("I"), Some("II"), Some("I")]),
            Column::categorical("er", vec![Some("pos"), Some("neg"), Some("neg")]),
            Column::numeric("months", vec![Some(50.0), Some(130.0), Some(20.0)]),
            Column::categorical("status", vec![Some("dead"), Some("living"), Some("living")]),
            Column::categorical("cause", vec![Some("disease"), None, None]),
        ])
        .unwrap()
    }

    #[test]
    fn clinical_matrix_excludes_response() {
        let f = clinical_frame();
        let r = rule();
        let plan = fit_encoder(&explanatory_columns(&f, &r), EncoderOptions::default()).unwrap();
        let dm = build_clinical_matrix(&f, &r, &plan).unwrap();
        assert!(dm
            .feature_names
            .iter()
            .all(|n| !n.starts_with("months") && !n.starts_with("status") && !n.starts_with("cause")));
        assert!(dm.values.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(
            dm.labels,
            vec![ClassLabel::Class1, ClassLabel::Class2, ClassLabel::Unlabeled]
        );
        let one = build_clinical_matrix(&f.select_rows(&[1]), &r, &plan).unwrap();
        assert_eq!(one.n_rows(), 1);
        assert_eq!(one.labels, vec![ClassLabel::Class2]);
    }

    #[test]
    fn clinical_matrix_requires_response_columns() {
        let f = clinical_frame().without_columns(&["cause"]);
        let plan = fit_encoder(&explanatory_columns(&f, &rule()), EncoderOptions::default()).unwrap();
        assert!(build_clinical_matrix(&f, &rule(), &plan).is_err());
    }

    fn genomic_frames() -> (TableFrame, TableFrame, TableFrame) {
        let expr = TableFrame::new(vec![
            Column::identifier("id", vec!["a", "b"]),
            Column::numeric("G1", vec![Some(1.0), Some(3.0)]),
            Column::numeric("G2", vec![Some(1.0), None]),
        ])
        .unwrap();
        let cna = TableFrame::new(vec![
            Column::identifier("id", vec!["a", "b"]),
            Column::numeric("G1", vec![Some(0.0), Some(0.0)]),
            Column::numeric("G3", vec![Some(-2.0), Some(1.0)]),
        ])
        .unwrap();
        let muts = TableFrame::new(vec![
            Column::identifier("id", vec!["a", "b"]),
            Column::categorical("TP53", vec![Some("Missense"), Some("Nonsense")]),
        ])
        .unwrap();
        (expr, cna, muts)
    }

    #[test]
    fn genomic_matrix_layout() {
        let (expr, cna, muts) = genomic_frames();
        let (plan, dm) = build_genomic_matrix(
            &expr,
            &cna,
            &muts,
            &[0, 1],
            vec![ClassLabel::Class1, ClassLabel::Class2],
            EncoderOptions::default(),
        )
        .unwrap();
        assert!(!dm.feature_names.iter().any(|n| n == "expr:G2"));
        assert_eq!(
            dm.feature_names,
            vec!["expr:G1", "cna:G1=0", "cna:G3=-2", "cna:G3=1", "mut:TP53=Missense", "mut:TP53=Nonsense"]
        );
        assert_eq!(dm.values.row(0).to_vec(), vec![-1.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(dm.values.row(1).to_vec(), vec![1.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(plan.width(), 6);
    }

    #[test]
    fn cna_full_category_order() {
        let cna = TableFrame::new(vec![
            Column::identifier("id", vec!["a", "b", "c", "d", "e"]),
            Column::numeric("G", vec![Some(2.0), Some(-2.0), Some(0.0), Some(-1.0), Some(1.0)]),
        ])
        .unwrap();
        let expr = TableFrame::new(vec![Column::identifier("id", vec!["a", "b", "c", "d", "e"])]).unwrap();
        let muts = expr.clone();
        let (_, dm) = build_genomic_matrix(
            &expr,
            &cna,
            &muts,
            &[0, 1, 2, 3, 4],
            vec![ClassLabel::Unlabeled; 5],
            EncoderOptions::default(),
        )
        .unwrap();
        assert_eq!(dm.values.row(1).to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn cna_out_of_range_is_error() {
        let (expr, _, muts) = genomic_frames();
        let cna = TableFrame::new(vec![
            Column::identifier("id", vec!["a", "b"]),
            Column::numeric("G1", vec![Some(3.0), Some(0.0)]),
        ])
        .unwrap();
        assert!(GenomicPlan::fit(&expr, &cna, &muts, &[0, 1], EncoderOptions::default()).is_err());
    }

    #[test]
    fn genomic_with_no_columns_is_error() {
        let ids = TableFrame::new(vec![
            Column::identifier("id", vec!["a"]),
            Column::numeric("G", vec![None]),
        ])
        .unwrap();
        assert!(GenomicPlan::fit(&ids, &ids, &ids, &[0], EncoderOptions::default()).is_err());
    }

    #[test]
    fn nullity_correlation_identical_pattern() {
        let f = TableFrame::new(vec![
            Column::identifier("id", vec!["1", "2", "3", "4"]),
            Column::numeric("a", vec![None, Some(1.0), None, Some(1.0)]),
            Column::categorical("b", vec![None, Some("x"), None, Some("y")]),
            Column::categorical("c", vec![Some("x"), Some("x"), Some("x"), Some("x")]),
            Column::categorical("d", vec![None, Some("x"), Some("x"), Some("x")]),
        ])
        .unwrap();
        let m = nullity_correlation(&f, 2);
        assert_eq!(m.names, vec!["a", "b"]);
        assert_abs_diff_eq!(m.get("a", "b").unwrap(), 1.0, epsilon = 1e-12);
        let m1 = nullity_correlation(&f, 1);
        assert!(m1.names.contains(&s("d")));
        assert!(!m1.names.contains(&s("c")));
    }

    #[test]
    fn nullity_group_quartiles() {
        let f = TableFrame::new(vec![
            Column::identifier("id", (1..=10).map(|i| i.to_string()).collect()),
            Column::numeric("lymph", (1..=10).map(|i| if i % 2 == 0 { None } else { Some(1.0) }).collect()),
            Column::numeric("age", (1..=10).map(|i| Some(i as f64)).collect()),
        ])
        .unwrap();
        let (missing, present) = nullity_group_stats(&f, "lymph", "age").unwrap();
        assert_eq!(present.median, 5.0);
        assert_eq!(missing.median, 6.0);
        assert_eq!((present.min, present.max), (1.0, 9.0));
        assert_eq!((present.q1, present.q3), (3.0, 7.0));
    }

    #[test]
    fn nullity_group_degenerate_and_empty() {
        let f = TableFrame::new(vec![
            Column::identifier("id", vec!["1", "2"]),
            Column::numeric("n", vec![None, Some(1.0)]),
            Column::numeric("t", vec![Some(4.0), Some(4.0)]),
        ])
        .unwrap();
        let (m, p) = nullity_group_stats(&f, "n", "t").unwrap();
        assert_eq!(m, p);
        assert_eq!(m.q1, 4.0);
        let err = nullity_group_stats(&f, "t", "n").unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
    }

    #[test]
    fn encoder_plan_json_roundtrip() {
        let f = clinical_frame();
        let plan = fit_encoder(&explanatory_columns(&f, &rule()), EncoderOptions::default()).unwrap();
        let text = serde_json::to_string(&plan).unwrap();
        let back: EncoderPlan = serde_json::from_str(&text).unwrap();
        assert_eq!(back, plan);
    }
}
