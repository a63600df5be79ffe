//! Tabular binary-classification datasets: the in-memory model, CSV ingestion
//! with a column schema, binary group selection, stratified splitting and
//! z-score standardization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    OneHot,
}

/// Feature matrix `X` with binary labels `Y` and a binary group indicator `G`
/// (`G = 0` is the minority group by convention).
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<u8>,
    groups: Vec<u8>,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    provenance: String,
}

impl TabularDataset {
    /// Builds a dataset from row-major features.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u8>,
        groups: Vec<u8>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let n = labels.len();
        let dim = feature_names.len();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if dim == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if feature_kinds.len() != dim {
            return Err(Error::Data("feature kinds do not match feature names".into()));
        }
        if groups.len() != n || features.len() != n * dim {
            return Err(Error::Data(format!(
                "shape mismatch: {} labels, {} groups, {} feature values for dim {}",
                n,
                groups.len(),
                features.len(),
                dim
            )));
        }
        if labels.iter().chain(groups.iter()).any(|&v| v > 1) {
            return Err(Error::Data("labels and groups must be 0 or 1".into()));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            features,
            dim,
            labels,
            groups,
            feature_names,
            feature_kinds,
            provenance: provenance.into(),
        })
    }

    /// Raw continuous features named `x0, x1, ...`.
    pub fn from_rows(
        rows: &[Vec<f64>],
        labels: Vec<u8>,
        groups: Vec<u8>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Data("ragged feature rows".into()));
        }
        let names = (0..dim).map(|j| format!("x{j}")).collect();
        Self::new(
            rows.concat(),
            labels,
            groups,
            names,
            vec![FeatureKind::Continuous; dim],
            provenance,
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    /// Row-major feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Row count per group, indexed by group id.
    pub fn group_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for &g in &self.groups {
            c[g as usize] += 1;
        }
        c
    }

    /// Row count per `(group, label)` cell, indexed `[g][y]`.
    pub fn cell_counts(&self) -> [[usize; 2]; 2] {
        let mut c = [[0; 2]; 2];
        for (&g, &y) in self.groups.iter().zip(&self.labels) {
            c[g as usize][y as usize] += 1;
        }
        c
    }

    /// The rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self::new(
            features,
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.groups[i]).collect(),
            self.feature_names.clone(),
            self.feature_kinds.clone(),
            self.provenance.clone(),
        )
    }

    /// Writes `x0,...,y,g` CSV with 9 significant digits per float.
    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e| Error::csv("<writer>", e);
        let mut header: Vec<String> = self.feature_names.clone();
        header.push("y".into());
        header.push("g".into());
        w.write_record(&header).map_err(map)?;
        let mut record = Vec::with_capacity(self.dim + 2);
        for (i, row) in self.rows().enumerate() {
            record.clear();
            record.extend(row.iter().map(|v| format_sig9(*v)));
            record.push(self.labels[i].to_string());
            record.push(self.groups[i].to_string());
            w.write_record(&record).map_err(map)?;
        }
        w.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }

    /// Reads the `x0,...,y,g` layout produced by [`write_csv_to`](Self::write_csv_to).
    /// All feature columns come back as continuous.
    pub fn read_csv_from<R: Read>(input: R, provenance: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let map = |e| Error::csv(provenance, e);
        let header: Vec<String> = r.headers().map_err(map)?.iter().map(String::from).collect();
        let n_cols = header.len();
        if n_cols < 3 || header[n_cols - 2] != "y" || header[n_cols - 1] != "g" {
            return Err(Error::Data(format!(
                "{provenance}: expected header x0,...,y,g, got {header:?}"
            )));
        }
        let dim = n_cols - 2;
        let (mut features, mut labels, mut groups) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(map)?;
            let parse_bit = |s: &str| -> Result<u8> {
                match s {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::Data(format!(
                        "{provenance}: row {line}: expected 0/1, got {other:?}"
                    ))),
                }
            };
            for v in rec.iter().take(dim) {
                features.push(v.parse::<f64>().map_err(|e| {
                    Error::Data(format!("{provenance}: row {line}: bad float {v:?}: {e}"))
                })?);
            }
            labels.push(parse_bit(&rec[dim])?);
            groups.push(parse_bit(&rec[dim + 1])?);
        }
        Self::new(
            features,
            labels,
            groups,
            header[..dim].to_vec(),
            vec![FeatureKind::Continuous; dim],
            provenance,
        )
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(std::io::BufReader::new(file), &path.display().to_string())
    }
}

/// Nine significant digits in scientific notation.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.8e}")
    }
}

/// Splits each `(G, Y)` cell so that `round(n_cell * test_fraction)` rows go
/// to the test side. Rows are visited in a shuffled order drawn from `rng`.
pub fn stratified_split(
    ds: &TabularDataset,
    test_fraction: f64,
    rng: &mut Rng,
) -> Result<(TabularDataset, TabularDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Data(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(rng);
    let cells = ds.cell_counts();
    let mut quota = [[0usize; 2]; 2];
    for g in 0..2 {
        for y in 0..2 {
            quota[g][y] = (cells[g][y] as f64 * test_fraction).round() as usize;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for i in order {
        let (g, y) = (ds.groups[i] as usize, ds.labels[i] as usize);
        if quota[g][y] > 0 {
            quota[g][y] -= 1;
            test.push(i);
        } else {
            train.push(i);
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data(format!(
            "split of {} rows at test_fraction {test_fraction} leaves an empty side",
            ds.len()
        )));
    }
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

// ---------------------------------------------------------------------------
// Schemas and CSV ingestion
// ---------------------------------------------------------------------------

/// A predicate on a raw cell value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValueMatcher {
    Exact(String),
    NotEqual(String),
    Lt(f64),
    Le(f64),
    Gt(f64),
    Ge(f64),
}

impl ValueMatcher {
    pub fn matches(&self, value: &str) -> bool {
        let num = || value.parse::<f64>().ok();
        match self {
            ValueMatcher::Exact(s) => value == s,
            ValueMatcher::NotEqual(s) => value != s,
            ValueMatcher::Lt(t) => num().is_some_and(|v| v < *t),
            ValueMatcher::Le(t) => num().is_some_and(|v| v <= *t),
            ValueMatcher::Gt(t) => num().is_some_and(|v| v > *t),
            ValueMatcher::Ge(t) => num().is_some_and(|v| v >= *t),
        }
    }
}

impl FromStr for ValueMatcher {
    type Err = Error;

    /// `<25`, `<=25`, `>45`, `>=45`, `!=O`, `=x` or a bare value.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let number = |rest: &str| {
            rest.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("expected a number in matcher {s:?}")))
        };
        Ok(if let Some(rest) = s.strip_prefix("<=") {
            ValueMatcher::Le(number(rest)?)
        } else if let Some(rest) = s.strip_prefix(">=") {
            ValueMatcher::Ge(number(rest)?)
        } else if let Some(rest) = s.strip_prefix("!=") {
            ValueMatcher::NotEqual(rest.trim().to_string())
        } else if let Some(rest) = s.strip_prefix('<') {
            ValueMatcher::Lt(number(rest)?)
        } else if let Some(rest) = s.strip_prefix('>') {
            ValueMatcher::Gt(number(rest)?)
        } else if let Some(rest) = s.strip_prefix('=') {
            ValueMatcher::Exact(rest.trim().to_string())
        } else {
            ValueMatcher::Exact(s.to_string())
        })
    }
}

impl fmt::Display for ValueMatcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueMatcher::Exact(s) => write!(f, "{s}"),
            ValueMatcher::NotEqual(s) => write!(f, "!={s}"),
            ValueMatcher::Lt(t) => write!(f, "<{t}"),
            ValueMatcher::Le(t) => write!(f, "<={t}"),
            ValueMatcher::Gt(t) => write!(f, ">{t}"),
            ValueMatcher::Ge(t) => write!(f, ">={t}"),
        }
    }
}

/// A value set: matches when any member matcher does. Parsed from `a|b|<25`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSet(pub Vec<ValueMatcher>);

impl ValueSet {
    pub fn matches(&self, value: &str) -> bool {
        self.0.iter().any(|m| m.matches(value))
    }
}

impl FromStr for ValueSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split('|')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(ValueMatcher::from_str)
            .collect::<Result<Vec<_>>>()?;
        if parts.is_empty() {
            return Err(Error::Config(format!("empty value set {s:?}")));
        }
        Ok(ValueSet(parts))
    }
}

impl fmt::Display for ValueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("|"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    /// One-hot encoded. Empty `levels` means the levels are discovered from
    /// the file; otherwise a value outside `levels` is an error.
    Categorical { levels: Vec<String> },
    /// Binary target: 1 when the value is in `positive`, else 0.
    Label { positive: ValueSet },
    /// Sensitive attribute kept aside for group selection, not a feature.
    Group,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

/// Keeps a row only when `column`'s value satisfies `keep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFilter {
    pub column: String,
    pub keep: ValueMatcher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub name: String,
    pub columns: Vec<ColumnSchema>,
    /// When false, `columns` lists every file column in order.
    pub has_header: bool,
    pub missing_markers: Vec<String>,
    pub filters: Vec<RowFilter>,
}

impl DatasetSchema {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnSchema>) -> Self {
        Self {
            name: name.into(),
            columns,
            has_header: true,
            missing_markers: vec!["?".into(), String::new()],
            filters: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let labels = self
            .columns
            .iter()
            .filter(|c| matches!(c.kind, ColumnKind::Label { .. }))
            .count();
        if labels != 1 {
            return Err(Error::Data(format!(
                "schema {} must have exactly one label column, found {labels}",
                self.name
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(&c.name) {
                return Err(Error::Data(format!("duplicate schema column {}", c.name)));
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Parses the compact `name:kind,...` form used in config files. Kinds are
    /// `continuous`, `categorical`, `group`, `drop` and `label=<value set>`.
    pub fn parse_columns(name: &str, spec: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (col, kind) = item
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("column entry {item:?} lacks ':kind'")))?;
            let kind = match kind.trim() {
                "continuous" => ColumnKind::Continuous,
                "categorical" => ColumnKind::Categorical { levels: Vec::new() },
                "group" => ColumnKind::Group,
                "drop" => ColumnKind::Drop,
                k => match k.strip_prefix("label=") {
                    Some(pos) => ColumnKind::Label {
                        positive: pos.parse()?,
                    },
                    None => return Err(Error::Config(format!("unknown column kind {k:?}"))),
                },
            };
            columns.push(ColumnSchema {
                name: col.trim().to_string(),
                kind,
            });
        }
        let schema = Self::new(name, columns);
        schema.validate()?;
        Ok(schema)
    }

    /// Column layout of ProPublica's `compas-scores-two-years.csv`, with the
    /// row filters ProPublica applied (which leave 6172 rows).
    ///
    /// The retained feature columns are an interpretation: the usual
    /// demographic, juvenile-record, prior-count and charge-degree columns.
    /// `race`, `sex` and `age` stay available for group selection.
    pub fn compas() -> Self {
        use ColumnKind::*;
        let col = |name: &str, kind| ColumnSchema {
            name: name.into(),
            kind,
        };
        let cat = || Categorical { levels: Vec::new() };
        let mut s = Self::new(
            "compas",
            vec![
                col("sex", cat()),
                col("age", Continuous),
                col("age_cat", cat()),
                col("race", cat()),
                col("juv_fel_count", Continuous),
                col("juv_misd_count", Continuous),
                col("juv_other_count", Continuous),
                col("priors_count", Continuous),
                col("c_charge_degree", cat()),
                col("days_b_screening_arrest", Drop),
                col("is_recid", Drop),
                col("score_text", Drop),
                col(
                    "two_year_recid",
                    Label {
                        positive: ValueSet(vec![ValueMatcher::Exact("1".into())]),
                    },
                ),
            ],
        );
        s.filters = vec![
            RowFilter {
                column: "days_b_screening_arrest".into(),
                keep: ValueMatcher::Le(30.0),
            },
            RowFilter {
                column: "days_b_screening_arrest".into(),
                keep: ValueMatcher::Ge(-30.0),
            },
            RowFilter {
                column: "is_recid".into(),
                keep: ValueMatcher::NotEqual("-1".into()),
            },
            RowFilter {
                column: "c_charge_degree".into(),
                keep: ValueMatcher::NotEqual("O".into()),
            },
            RowFilter {
                column: "score_text".into(),
                keep: ValueMatcher::NotEqual("N/A".into()),
            },
        ];
        s
    }

    /// UCI Adult (`adult.data` / `adult.test`): headerless, 14 attributes plus
    /// the income label, `?` marking missing values.
    pub fn adult() -> Self {
        use ColumnKind::*;
        let col = |name: &str, kind| ColumnSchema {
            name: name.into(),
            kind,
        };
        let cat = || Categorical { levels: Vec::new() };
        let mut s = Self::new(
            "adult",
            vec![
                col("age", Continuous),
                col("workclass", cat()),
                col("fnlwgt", Continuous),
                col("education", cat()),
                col("education_num", Continuous),
                col("marital_status", cat()),
                col("occupation", cat()),
                col("relationship", cat()),
                col("race", cat()),
                col("sex", cat()),
                col("capital_gain", Continuous),
                col("capital_loss", Continuous),
                col("hours_per_week", Continuous),
                col("native_country", cat()),
                col(
                    "income",
                    Label {
                        positive: ValueSet(vec![
                            ValueMatcher::Exact(">50K".into()),
                            ValueMatcher::Exact(">50K.".into()),
                        ]),
                    },
                ),
            ],
        );
        s.has_header = false;
        s
    }

    pub fn bundled(name: &str) -> Option<Self> {
        match name {
            "compas" => Some(Self::compas()),
            "adult" => Some(Self::adult()),
            _ => None,
        }
    }

    /// Fills empty categorical level lists with the sorted levels seen in
    /// `path`, so a train and a test file share one encoding.
    pub fn with_levels_from(&self, path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_filtered_rows(path.as_ref(), self)?;
        let mut out = self.clone();
        for (idx, c) in out.columns.iter_mut().enumerate() {
            if let ColumnKind::Categorical { levels } = &mut c.kind {
                if levels.is_empty() {
                    let set: BTreeSet<&str> = rows.iter().map(|r| r[idx].as_str()).collect();
                    *levels = set.into_iter().map(String::from).collect();
                }
            }
        }
        Ok(out)
    }
}

/// A loaded CSV before group selection: encoded features and labels plus
/// the raw values of every non-dropped column.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub features: Vec<f64>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub attributes: BTreeMap<String, Vec<String>>,
    pub provenance: String,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }
}

/// Rows (already filtered and free of missing markers) as schema-ordered
/// string cells.
fn read_filtered_rows(path: &Path, schema: &DatasetSchema) -> Result<Vec<Vec<String>>> {
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file));

    // Positions of schema columns and filter columns in the file.
    let header: Vec<String> = if schema.has_header {
        reader
            .headers()
            .map_err(|e| Error::csv(path, e))?
            .iter()
            .map(String::from)
            .collect()
    } else {
        schema.columns.iter().map(|c| c.name.clone()).collect()
    };
    let position = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!(
                "{}: unknown column {name:?} (schema {})",
                path.display(),
                schema.name
            ))
        })
    };
    let col_pos = schema
        .columns
        .iter()
        .map(|c| position(&c.name))
        .collect::<Result<Vec<_>>>()?;
    let filter_pos = schema
        .filters
        .iter()
        .map(|f| position(&f.column))
        .collect::<Result<Vec<_>>>()?;
    let needed = col_pos.iter().chain(&filter_pos).copied().max().unwrap_or(0) + 1;

    let mut rows = Vec::new();
    let (mut short, mut missing, mut filtered) = (0usize, 0usize, 0usize);
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() < needed {
            short += 1;
            continue;
        }
        let has_missing = schema.columns.iter().zip(&col_pos).any(|(c, &p)| {
            c.kind != ColumnKind::Drop && schema.missing_markers.iter().any(|m| m == &rec[p])
        });
        if has_missing {
            missing += 1;
            continue;
        }
        if !schema
            .filters
            .iter()
            .zip(&filter_pos)
            .all(|(f, &p)| f.keep.matches(&rec[p]))
        {
            filtered += 1;
            continue;
        }
        rows.push(col_pos.iter().map(|&p| rec[p].to_string()).collect());
    }
    info!(
        "{}: kept {} rows (dropped {} short, {} with missing values, {} by filters)",
        path.display(),
        rows.len(),
        short,
        missing,
        filtered
    );
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "{}: no rows left after filtering",
            path.display()
        )));
    }
    Ok(rows)
}

/// Loads a CSV according to `schema`: drops rows with missing markers or
/// failing a row filter, one-hot encodes categorical columns and extracts the
/// label.
pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<RawTable> {
    let path = path.as_ref();
    let schema = if schema
        .columns
        .iter()
        .any(|c| matches!(&c.kind, ColumnKind::Categorical { levels } if levels.is_empty()))
    {
        schema.with_levels_from(path)?
    } else {
        schema.clone()
    };
    let rows = read_filtered_rows(path, &schema)?;

    let mut feature_names = Vec::new();
    let mut feature_kinds = Vec::new();
    for c in &schema.columns {
        match &c.kind {
            ColumnKind::Continuous => {
                feature_names.push(c.name.clone());
                feature_kinds.push(FeatureKind::Continuous);
            }
            ColumnKind::Categorical { levels } => {
                for l in levels {
                    feature_names.push(format!("{}={}", c.name, l));
                    feature_kinds.push(FeatureKind::OneHot);
                }
            }
            _ => {}
        }
    }

    let mut features = Vec::with_capacity(rows.len() * feature_names.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut attributes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (line, row) in rows.iter().enumerate() {
        for (c, cell) in schema.columns.iter().zip(row) {
            match &c.kind {
                ColumnKind::Continuous => features.push(cell.parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "{}: row {line}: column {} is not numeric: {cell:?}",
                        path.display(),
                        c.name
                    ))
                })?),
                ColumnKind::Categorical { levels } => {
                    let hit = levels.iter().position(|l| l == cell).ok_or_else(|| {
                        Error::Data(format!(
                            "{}: row {line}: unmapped level {cell:?} in column {}",
                            path.display(),
                            c.name
                        ))
                    })?;
                    features.extend((0..levels.len()).map(|k| if k == hit { 1.0 } else { 0.0 }));
                }
                ColumnKind::Label { positive } => labels.push(positive.matches(cell) as u8),
                ColumnKind::Group | ColumnKind::Drop => {}
            }
            if c.kind != ColumnKind::Drop {
                attributes.entry(c.name.clone()).or_default().push(cell.clone());
            }
        }
    }
    Ok(RawTable {
        features,
        labels,
        feature_names,
        feature_kinds,
        attributes,
        provenance: path.display().to_string(),
    })
}

/// Binary group selection on a multi-valued attribute column. Rows matching
/// `g0` become group 0, rows matching `g1` group 1, other rows are dropped.
pub fn select_binary_groups(
    table: &RawTable,
    column: &str,
    g0: &ValueSet,
    g1: &ValueSet,
) -> Result<TabularDataset> {
    let values = table
        .attributes
        .get(column)
        .ok_or_else(|| Error::Data(format!("unknown group column {column:?}")))?;
    let dim = table.dim();
    let mut keep = Vec::new();
    let mut groups = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match (g0.matches(v), g1.matches(v)) {
            (true, true) => {
                return Err(Error::Data(format!(
                    "group value sets overlap: {v:?} matches both {g0} and {g1}"
                )))
            }
            (true, false) => {
                keep.push(i);
                groups.push(0);
            }
            (false, true) => {
                keep.push(i);
                groups.push(1);
            }
            (false, false) => {}
        }
    }
    let counts = [
        groups.iter().filter(|&&g| g == 0).count(),
        groups.iter().filter(|&&g| g == 1).count(),
    ];
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::Data(format!(
            "group column {column}: empty group after selection (G0={}, G1={})",
            counts[0], counts[1]
        )));
    }
    let mut features = Vec::with_capacity(keep.len() * dim);
    for &i in &keep {
        features.extend_from_slice(&table.features[i * dim..(i + 1) * dim]);
    }
    TabularDataset::new(
        features,
        keep.iter().map(|&i| table.labels[i]).collect(),
        groups,
        table.feature_names.clone(),
        table.feature_kinds.clone(),
        format!("{} [{column}: {g0} vs {g1}]", table.provenance),
    )
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Train-split z-score statistics for continuous columns. Zero-variance
/// continuous columns are recorded in `dropped` and removed on apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub input_names: Vec<String>,
    pub stats: Vec<Option<ColumnStats>>,
    pub dropped: Vec<String>,
}

const ZERO_VARIANCE: f64 = 1e-12;

pub fn fit_standardizer(train: &TabularDataset) -> Result<Standardizer> {
    if train.is_empty() {
        return Err(Error::Data("cannot fit a standardizer on no rows".into()));
    }
    let n = train.len() as f64;
    let mut stats = Vec::with_capacity(train.dim());
    let mut dropped = Vec::new();
    for (j, (name, kind)) in train
        .feature_names()
        .iter()
        .zip(train.feature_kinds())
        .enumerate()
    {
        if *kind != FeatureKind::Continuous {
            stats.push(None);
            continue;
        }
        let mean = train.rows().map(|r| r[j]).sum::<f64>() / n;
        let var = train.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < ZERO_VARIANCE {
            warn!("dropping zero-variance column {name}");
            dropped.push(name.clone());
        }
        stats.push(Some(ColumnStats {
            name: name.clone(),
            mean,
            std,
        }));
    }
    Ok(Standardizer {
        input_names: train.feature_names().to_vec(),
        stats,
        dropped,
    })
}

pub fn apply_standardizer(std: &Standardizer, ds: &TabularDataset) -> Result<TabularDataset> {
    if ds.feature_names() != std.input_names.as_slice() {
        return Err(Error::Data(
            "standardizer was fitted on a different feature layout".into(),
        ));
    }
    let keep: Vec<usize> = (0..ds.dim())
        .filter(|&j| !std.dropped.contains(&ds.feature_names()[j]))
        .collect();
    let mut features = Vec::with_capacity(ds.len() * keep.len());
    for row in ds.rows() {
        for &j in &keep {
            features.push(match &std.stats[j] {
                Some(s) => (row[j] - s.mean) / s.std,
                None => row[j],
            });
        }
    }
    TabularDataset::new(
        features,
        ds.labels().to_vec(),
        ds.groups().to_vec(),
        keep.iter().map(|&j| ds.feature_names()[j].clone()).collect(),
        keep.iter().map(|&j| ds.feature_kinds()[j]).collect(),
        ds.provenance(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(rows: &[Vec<f64>]) -> TabularDataset {
        let n = rows.len();
        TabularDataset::from_rows(rows, vec![0; n], vec![0; n], "toy").unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn standardizer_uses_population_std() {
        let ds = toy(&[vec![1.0], vec![2.0], vec![3.0]]);
        let s = fit_standardizer(&ds).unwrap();
        let out = apply_standardizer(&s, &ds).unwrap();
        let z = 1.0 / (2.0f64 / 3.0).sqrt();
        let expected = [-z, 0.0, z];
        for (got, want) in out.features().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((z - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_dropped() {
        let ds = toy(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]);
        let s = fit_standardizer(&ds).unwrap();
        assert_eq!(s.dropped, vec!["x1".to_string()]);
        assert_eq!(apply_standardizer(&s, &ds).unwrap().dim(), 1);
    }

    #[test]
    fn test_rows_use_train_statistics() {
        let train = toy(&[vec![1.0, 10.0], vec![3.0, 30.0]]);
        let s = fit_standardizer(&train).unwrap();
        let test = toy(&[vec![2.0, 20.0], vec![100.0, 20.0]]);
        let out = apply_standardizer(&s, &test).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.0]);
        // (100 - 2) / 1: the test batch's own moments are never used.
        assert!((out.row(1)[0] - 98.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_columns_untouched() {
        let ds = TabularDataset::new(
            vec![1.0, 0.0, 3.0, 1.0],
            vec![0, 1],
            vec![0, 1],
            vec!["a".into(), "b=x".into()],
            vec![FeatureKind::Continuous, FeatureKind::OneHot],
            "t",
        )
        .unwrap();
        let out = apply_standardizer(&fit_standardizer(&ds).unwrap(), &ds).unwrap();
        assert_eq!(out.row(0)[1], 0.0);
        assert_eq!(out.row(1)[1], 1.0);
    }

    #[test]
    fn load_drops_missing_rows() {
        let f = write_tmp("a,b,y\n1,x,1\n2,,0\n3,z,0\n");
        let schema = DatasetSchema::parse_columns("toy", "a:continuous,b:categorical,y:label=1")
            .unwrap();
        let t = load_csv(f.path(), &schema).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.labels, vec![1, 0]);
        assert_eq!(t.feature_names, vec!["a", "b=x", "b=z"]);
        assert_eq!(t.features, vec![1.0, 1.0, 0.0, 3.0, 0.0, 1.0]);
    }

    #[test]
    fn load_rejects_unknown_column_and_unmapped_level() {
        let f = write_tmp("a,y\n1,1\n");
        let schema = DatasetSchema::parse_columns("toy", "zz:continuous,y:label=1").unwrap();
        let err = load_csv(f.path(), &schema).unwrap_err().to_string();
        assert!(err.contains("unknown column"), "{err}");

        let f = write_tmp("a,b,y\n1,q,1\n");
        let mut schema = DatasetSchema::parse_columns("toy", "a:continuous,b:categorical,y:label=1")
            .unwrap();
        schema.columns[1].kind = ColumnKind::Categorical {
            levels: vec!["x".into()],
        };
        let err = load_csv(f.path(), &schema).unwrap_err().to_string();
        assert!(err.contains("unmapped level"), "{err}");
    }

    #[test]
    fn load_errors_when_everything_filtered() {
        let f = write_tmp("a,y\n?,1\n");
        let schema = DatasetSchema::parse_columns("toy", "a:continuous,y:label=1").unwrap();
        assert!(load_csv(f.path(), &schema).is_err());
    }

    #[test]
    fn select_groups_by_age_thresholds() {
        let f = write_tmp("age,y\n20,1\n30,0\n50,1\n24,0\n45,1\n");
        let schema = DatasetSchema::parse_columns("toy", "age:continuous,y:label=1").unwrap();
        let t = load_csv(f.path(), &schema).unwrap();
        let ds = select_binary_groups(&t, "age", &"<25".parse().unwrap(), &">45".parse().unwrap())
            .unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.groups(), &[0, 1, 0]);
        assert_eq!(ds.features(), &[20.0, 50.0, 24.0]);

        // Covering every value is a no-op filter.
        let all = select_binary_groups(&t, "age", &"<40".parse().unwrap(), &">=40".parse().unwrap())
            .unwrap();
        assert_eq!(all.len(), t.len());
    }

    #[test]
    fn select_groups_errors() {
        let f = write_tmp("x,r,y\n1,A,1\n2,B,0\n");
        let schema = DatasetSchema::parse_columns("toy", "x:continuous,r:group,y:label=1").unwrap();
        let t = load_csv(f.path(), &schema).unwrap();
        assert!(select_binary_groups(&t, "r", &"A".parse().unwrap(), &"C".parse().unwrap()).is_err());
        assert!(select_binary_groups(&t, "r", &"A".parse().unwrap(), &"A|B".parse().unwrap()).is_err());
        let ds = select_binary_groups(&t, "r", &"A".parse().unwrap(), &"B".parse().unwrap()).unwrap();
        assert_eq!(ds.groups(), &[0, 1]);
    }

    #[test]
    fn headerless_adult_layout() {
        let f = write_tmp(
            "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K\n\
             50, ?, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, 13, United-States, <=50K\n\
             38, Private, 215646, HS-grad, 9, Divorced, Handlers-cleaners, Not-in-family, Black, Female, 0, 0, 40, United-States, >50K.\n",
        );
        let t = load_csv(f.path(), &DatasetSchema::adult()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.labels, vec![0, 1]);
        let ds = select_binary_groups(&t, "race", &"Black".parse().unwrap(), &"White".parse().unwrap())
            .unwrap();
        assert_eq!(ds.group_counts(), [1, 1]);
    }

    #[test]
    fn matcher_parsing() {
        assert_eq!("<25".parse::<ValueMatcher>().unwrap(), ValueMatcher::Lt(25.0));
        assert_eq!(">=4".parse::<ValueMatcher>().unwrap(), ValueMatcher::Ge(4.0));
        assert_eq!(
            "!=O".parse::<ValueMatcher>().unwrap(),
            ValueMatcher::NotEqual("O".into())
        );
        assert!(ValueMatcher::Lt(25.0).matches("24.5"));
        assert!(!ValueMatcher::Lt(25.0).matches("abc"));
        let set: ValueSet = "Black|White".parse().unwrap();
        assert!(set.matches("White") && !set.matches("Asian"));
    }

    #[test]
    fn synthetic_csv_round_trip() {
        let ds = TabularDataset::from_rows(
            &[vec![1.0 / 3.0, -7.25], vec![0.0, 1e-7]],
            vec![1, 0],
            vec![0, 1],
            "rt",
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,y,g\n"));
        let back = TabularDataset::read_csv_from(buf.as_slice(), "rt").unwrap();
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.groups(), ds.groups());
        for (a, b) in back.features().iter().zip(ds.features()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn split_matches_fraction_per_cell() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels = (0..20).map(|i| (i % 2) as u8).collect();
        let ds = TabularDataset::from_rows(&rows, labels, vec![0; 20], "s").unwrap();
        let mut rng = crate::rng::seeded(3);
        let (train, test) = stratified_split(&ds, 0.5, &mut rng).unwrap();
        assert_eq!((train.len(), test.len()), (10, 10));
        assert_eq!(test.cell_counts()[0], [5, 5]);
    }
}
