//! Typed, patient-keyed tables loaded from delimiter-separated text.
//!
//! A [`TableFrame`] is immutable once built. Every column carries its own
//! missingness vector; a missing numeric cell holds `NaN` and a missing text
//! cell holds the empty string, neither of which should be read as data.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MISSING_TOKENS: [&str; 4] = ["", "NA", "NaN", "null"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Identifier,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Text(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    kind: ColumnKind,
    data: ColumnData,
    missing: Vec<bool>,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        let missing = values.iter().map(Option::is_none).collect();
        let data = values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        Column {
            name: name.into(),
            kind: ColumnKind::Numeric,
            data: ColumnData::Numeric(data),
            missing,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, values: Vec<Option<S>>) -> Self {
        let missing = values.iter().map(Option::is_none).collect();
        let data = values
            .into_iter()
            .map(|v| v.map(Into::into).unwrap_or_default())
            .collect();
        Column {
            name: name.into(),
            kind: ColumnKind::Categorical,
            data: ColumnData::Text(data),
            missing,
        }
    }

    pub fn identifier<S: Into<String>>(name: impl Into<String>, values: Vec<S>) -> Self {
        let data: Vec<String> = values.into_iter().map(Into::into).collect();
        Column {
            name: name.into(),
            kind: ColumnKind::Identifier,
            missing: vec![false; data.len()],
            data: ColumnData::Text(data),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn missing(&self) -> &[bool] {
        &self.missing
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    /// Numeric values, `None` for text columns.
    pub fn as_numeric(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&[String]> {
        match &self.data {
            ColumnData::Text(v) => Some(v),
            ColumnData::Numeric(_) => None,
        }
    }

    /// Cell rendered as text, `None` when missing.
    pub fn cell_text(&self, row: usize) -> Option<String> {
        if self.missing[row] {
            return None;
        }
        Some(match &self.data {
            ColumnData::Numeric(v) => v[row].to_string(),
            ColumnData::Text(v) => v[row].clone(),
        })
    }

    fn select(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Text(v) => ColumnData::Text(rows.iter().map(|&r| v[r].clone()).collect()),
        };
        Column {
            name: self.name.clone(),
            kind: self.kind,
            data,
            missing: rows.iter().map(|&r| self.missing[r]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableFrame {
    columns: Vec<Column>,
    id_index: usize,
}

impl TableFrame {
    /// Builds a frame from columns; exactly one must be an identifier column.
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let ids: Vec<usize> = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Identifier)
            .map(|(i, _)| i)
            .collect();
        let id_index = match ids.as_slice() {
            [i] => *i,
            [] => return Err(Error::Schema("no identifier column".into())),
            _ => return Err(Error::Schema("more than one identifier column".into())),
        };
        let n = columns[id_index].len();
        let mut names = HashSet::new();
        for c in &columns {
            if c.len() != n {
                return Err(Error::Integrity(format!(
                    "column `{}` has {} rows, expected {n}",
                    c.name,
                    c.len()
                )));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        let id_col = &columns[id_index];
        let mut seen = HashSet::new();
        for (row, id) in id_col.as_text().unwrap_or(&[]).iter().enumerate() {
            if id_col.missing[row] || id.is_empty() {
                return Err(Error::Integrity(format!("missing patient id at row {}", row + 1)));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Integrity(format!("duplicate patient id `{id}`")));
            }
        }
        Ok(TableFrame { columns, id_index })
    }

    pub fn n_rows(&self) -> usize {
        self.columns[self.id_index].len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn id_column(&self) -> &Column {
        &self.columns[self.id_index]
    }

    pub fn patient_ids(&self) -> &[String] {
        self.columns[self.id_index]
            .as_text()
            .expect("identifier column holds text")
    }

    /// Rows × columns missingness matrix in column order.
    pub fn missing_mask(&self) -> Array2<bool> {
        Array2::from_shape_fn((self.n_rows(), self.n_cols()), |(r, c)| {
            self.columns[c].missing[r]
        })
    }

    /// New frame holding `rows` in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> TableFrame {
        TableFrame {
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            id_index: self.id_index,
        }
    }

    /// Frame restricted to the named columns (the identifier is always kept).
    pub fn select_columns(&self, names: &[&str]) -> Result<TableFrame> {
        let mut cols = vec![self.id_column().clone()];
        for name in names {
            let c = self
                .column(name)
                .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))?;
            if c.kind != ColumnKind::Identifier {
                cols.push(c.clone());
            }
        }
        TableFrame::new(cols)
    }

    pub fn without_columns(&self, names: &[&str]) -> TableFrame {
        let columns: Vec<Column> = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Identifier || !names.contains(&c.name.as_str()))
            .cloned()
            .collect();
        TableFrame::new(columns).expect("dropping columns keeps frame invariants")
    }

    pub fn schema(&self) -> SchemaSpec {
        SchemaSpec {
            columns: self
                .columns
                .iter()
                .map(|c| ColumnSpec {
                    name: c.name.clone(),
                    kind: c.kind,
                    categories: None,
                })
                .collect(),
            default_kind: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

/// Declared column kinds. `default_kind` admits header columns that are not
/// listed, which wide expression or CNA tables need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub columns: Vec<ColumnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_kind: Option<ColumnKind>,
}

impl SchemaSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: SchemaSpec =
            toml::from_str(s).map_err(|e| Error::Schema(format!("invalid schema file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.default_kind == Some(ColumnKind::Identifier) {
            return Err(Error::Schema("default kind cannot be identifier".into()));
        }
        let ids = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Identifier)
            .count();
        if ids != 1 {
            return Err(Error::Schema(format!(
                "schema must declare exactly one identifier column, found {ids}"
            )));
        }
        let mut names = HashSet::new();
        for c in &self.columns {
            if !names.insert(&c.name) {
                return Err(Error::Schema(format!("column `{}` declared twice", c.name)));
            }
            if let Some(cats) = &c.categories {
                let unique: HashSet<&String> = cats.iter().collect();
                if unique.len() != cats.len() {
                    return Err(Error::Schema(format!(
                        "duplicate categories declared for `{}`",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Delimiter and missing-token settings for reading and writing tables.
#[derive(Debug, Clone)]
pub struct TableFormat {
    pub delimiter: u8,
    pub missing_tokens: HashSet<String>,
}

impl Default for TableFormat {
    fn default() -> Self {
        TableFormat {
            delimiter: b'\t',
            missing_tokens: DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TableFormat {
    pub fn with_delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = delimiter;
        self
    }

    fn write_token(&self) -> &str {
        if self.missing_tokens.contains("NA") {
            "NA"
        } else {
            self.missing_tokens
                .iter()
                .min()
                .map(String::as_str)
                .unwrap_or("")
        }
    }
}

pub fn load_table(path: &Path, schema: &SchemaSpec, format: &TableFormat) -> Result<TableFrame> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, schema, format)
}

/// Parses delimiter-separated text with a header row against `schema`.
pub fn read_table<R: std::io::Read>(
    reader: R,
    schema: &SchemaSpec,
    format: &TableFormat,
) -> Result<TableFrame> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let mut specs = Vec::with_capacity(header.len());
    for name in &header {
        let spec = match schema.lookup(name) {
            Some(s) => s.clone(),
            None => match schema.default_kind {
                Some(kind) => ColumnSpec {
                    name: name.clone(),
                    kind,
                    categories: None,
                },
                None => {
                    return Err(Error::Schema(format!(
                        "column `{name}` is not declared in the schema"
                    )))
                }
            },
        };
        specs.push(spec);
    }
    let present: HashSet<&String> = header.iter().collect();
    if let Some(absent) = schema.columns.iter().find(|c| !present.contains(&c.name)) {
        return Err(Error::Schema(format!(
            "schema column `{}` is absent from the file header",
            absent.name
        )));
    }
    let category_sets: Vec<Option<HashSet<&str>>> = specs
        .iter()
        .map(|s| {
            s.categories
                .as_ref()
                .map(|c| c.iter().map(String::as_str).collect())
        })
        .collect();

    let mut numeric: Vec<Vec<Option<f64>>> = vec![Vec::new(); specs.len()];
    let mut text: Vec<Vec<Option<String>>> = vec![Vec::new(); specs.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: row + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        for (c, raw) in record.iter().enumerate() {
            let cell = raw.trim();
            let is_missing = format.missing_tokens.contains(cell);
            let spec = &specs[c];
            match spec.kind {
                ColumnKind::Numeric => {
                    if is_missing {
                        numeric[c].push(None);
                    } else {
                        let v: f64 = cell.parse().map_err(|_| Error::Parse {
                            row: row + 1,
                            column: spec.name.clone(),
                            message: format!("`{cell}` is not a number"),
                        })?;
                        numeric[c].push(Some(v));
                    }
                }
                ColumnKind::Identifier => {
                    if is_missing {
                        return Err(Error::Integrity(format!(
                            "missing patient id at row {}",
                            row + 1
                        )));
                    }
                    text[c].push(Some(cell.to_string()));
                }
                ColumnKind::Categorical => {
                    if is_missing {
                        text[c].push(None);
                        continue;
                    }
                    if let Some(allowed) = &category_sets[c] {
                        if !allowed.contains(cell) {
                            return Err(Error::Parse {
                                row: row + 1,
                                column: spec.name.clone(),
                                message: format!("`{cell}` is not a declared category"),
                            });
                        }
                    }
                    text[c].push(Some(cell.to_string()));
                }
            }
        }
    }

    let columns = specs
        .into_iter()
        .enumerate()
        .map(|(c, spec)| match spec.kind {
            ColumnKind::Numeric => Column::numeric(spec.name, std::mem::take(&mut numeric[c])),
            ColumnKind::Categorical => {
                Column::categorical(spec.name, std::mem::take(&mut text[c]))
            }
            ColumnKind::Identifier => Column::identifier(
                spec.name,
                std::mem::take(&mut text[c])
                    .into_iter()
                    .map(Option::unwrap_or_default)
                    .collect(),
            ),
        })
        .collect();
    TableFrame::new(columns)
}

pub fn write_table(frame: &TableFrame, path: &Path, format: &TableFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_table_to(frame, file, format).map_err(|e| match e {
        Error::Serde(msg) => Error::io(path, std::io::Error::other(msg)),
        other => other,
    })
}

pub fn write_table_to<W: std::io::Write>(
    frame: &TableFrame,
    writer: W,
    format: &TableFormat,
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(format.delimiter)
        .from_writer(writer);
    let token = format.write_token().to_string();
    let to_serde = |e: csv::Error| Error::Serde(e.to_string());
    wtr.write_record(frame.columns.iter().map(|c| c.name.as_str()))
        .map_err(to_serde)?;
    for row in 0..frame.n_rows() {
        let record: Vec<String> = frame
            .columns
            .iter()
            .map(|c| c.cell_text(row).unwrap_or_else(|| token.clone()))
            .collect();
        wtr.write_record(&record).map_err(to_serde)?;
    }
    wtr.flush().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(())
}

/// Restricts every frame to the patients present in all of them, ordered
/// lexicographically by patient id.
pub fn intersect_patients(frames: &[TableFrame]) -> Result<Vec<TableFrame>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let mut common: BTreeSet<&str> = first.patient_ids().iter().map(String::as_str).collect();
    for f in &frames[1..] {
        let ids: HashSet<&str> = f.patient_ids().iter().map(String::as_str).collect();
        common.retain(|id| ids.contains(id));
    }
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(frames
        .iter()
        .map(|f| {
            let pos: HashMap<&str, usize> = f
                .patient_ids()
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i))
                .collect();
            let rows: Vec<usize> = common.iter().map(|id| pos[id]).collect();
            f.select_rows(&rows)
        })
        .collect())
}
