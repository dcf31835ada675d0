//! Tabular ingestion: CSV with a header row plus a column-role schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ColumnKind, CreditGraph, FeatureColumn, FeatureLayout, Group, GroupNames, Label, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnRole {
    #[serde(rename = "feature-continuous")]
    Continuous,
    #[serde(rename = "feature-categorical")]
    Categorical,
    #[serde(rename = "sensitive")]
    Sensitive,
    #[serde(rename = "label")]
    Label,
    #[serde(rename = "ignore")]
    Ignore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// Raw label value meaning "good"; every other value is "bad".
    pub good_label: String,
    /// Encode the sensitive column into the feature matrix as well.
    #[serde(default)]
    pub include_sensitive: bool,
    pub columns: BTreeMap<String, ColumnRole>,
}

impl Schema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn single(&self, role: ColumnRole, name: &'static str) -> Result<&str> {
        let found: Vec<&String> = self.columns.iter().filter(|(_, r)| **r == role).map(|(c, _)| c).collect();
        match found.as_slice() {
            [one] => Ok(one.as_str()),
            _ => Err(Error::RoleCount {
                role: name,
                found: found.len(),
            }),
        }
    }
}

/// Reads `path` and encodes it into an edgeless [`CreditGraph`].
///
/// Continuous columns are min-max scaled over the whole file; categorical
/// columns become one-hot blocks with levels in sorted order. The label is
/// never a feature. The sensitive column is a feature only when
/// `schema.include_sensitive` is set.
pub fn ingest_dataset(path: &Path, schema: &Schema) -> Result<CreditGraph> {
    let sensitive_col = schema.single(ColumnRole::Sensitive, "sensitive")?;
    let label_col = schema.single(ColumnRole::Label, "label")?;

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(str::to_owned).collect(),
        Err(e) => return Err(csv_err(e)),
    };
    for name in schema.columns.keys() {
        if !headers.contains(name) {
            return Err(Error::UnknownColumn(name.clone()));
        }
    }
    for h in &headers {
        if !schema.columns.contains_key(h) {
            return Err(Error::UnassignedColumn(h.clone()));
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        rows.push(record.iter().map(str::to_owned).collect());
    }
    if rows.is_empty() {
        return Err(Error::NoRows(path.to_path_buf()));
    }
    let column = |name: &str| headers.iter().position(|h| h == name).expect("checked above");

    // sensitive column: exactly two values, the more frequent one is the majority
    let sens_idx = column(sensitive_col);
    let mut sens_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for row in &rows {
        *sens_counts.entry(row[sens_idx].as_str()).or_default() += 1;
    }
    if sens_counts.len() != 2 {
        return Err(Error::SensitiveArity {
            column: sensitive_col.to_owned(),
            found: sens_counts.len(),
        });
    }
    let mut by_size: Vec<(&str, usize)> = sens_counts.into_iter().collect();
    // stable sort keeps lexicographic order for ties
    by_size.sort_by_key(|b| std::cmp::Reverse(b.1));
    let group_names = GroupNames {
        majority: by_size[0].0.to_owned(),
        minority: by_size[1].0.to_owned(),
    };
    let groups: Vec<Group> = rows
        .iter()
        .map(|r| group_names.parse(&r[sens_idx]).expect("two values"))
        .collect();

    let label_idx = column(label_col);
    let label_values: BTreeSet<&str> = rows.iter().map(|r| r[label_idx].as_str()).collect();
    let non_good = label_values.iter().filter(|v| **v != schema.good_label).count();
    if label_values.len() > 2 || non_good > 1 {
        return Err(Error::LabelValues {
            column: label_col.to_owned(),
            good: schema.good_label.clone(),
            found: label_values.iter().map(|s| s.to_string()).collect(),
        });
    }
    let labels: Vec<Label> = rows
        .iter()
        .map(|r| {
            if r[label_idx] == schema.good_label {
                Label::Good
            } else {
                Label::Bad
            }
        })
        .collect();

    let mut layout = FeatureLayout::default();
    let mut blocks: Vec<Vec<Vec<f64>>> = Vec::new(); // per column, per matrix column, per row
    let mut offset = 0;
    for (idx, name) in headers.iter().enumerate() {
        let role = schema.columns[name];
        let kind = match role {
            ColumnRole::Continuous => {
                let mut values = Vec::with_capacity(rows.len());
                for (r, row) in rows.iter().enumerate() {
                    let v: f64 = row[idx].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                        Error::BadNumber {
                            column: name.clone(),
                            row: r + 1,
                            value: row[idx].clone(),
                        }
                    })?;
                    values.push(v);
                }
                let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let integral = values.iter().all(|v| v.fract() == 0.0);
                let span = max - min;
                let scaled = values
                    .iter()
                    .map(|v| if span > 0.0 { (v - min) / span } else { 0.0 })
                    .collect();
                blocks.push(vec![scaled]);
                ColumnKind::Continuous { min, max, integral }
            }
            ColumnRole::Categorical => {
                let (levels, block) = one_hot(&rows, idx);
                blocks.push(block);
                ColumnKind::Categorical { levels }
            }
            ColumnRole::Sensitive if schema.include_sensitive => {
                let (levels, block) = one_hot(&rows, idx);
                blocks.push(block);
                ColumnKind::Categorical { levels }
            }
            _ => continue,
        };
        let col = FeatureColumn {
            name: name.clone(),
            offset,
            kind,
        };
        offset += col.width();
        layout.columns.push(col);
    }

    let flat: Vec<&Vec<f64>> = blocks.iter().flatten().collect();
    let features = Array2::from_shape_fn((rows.len(), flat.len()), |(r, c)| flat[c][r]);
    CreditGraph::new(
        (0..rows.len() as u32).map(NodeId).collect(),
        features,
        groups,
        labels,
        Vec::new(),
        layout,
        group_names,
    )
}

fn one_hot(rows: &[Vec<String>], idx: usize) -> (Vec<String>, Vec<Vec<f64>>) {
    let levels: Vec<String> = rows
        .iter()
        .map(|r| r[idx].clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let block = levels
        .iter()
        .map(|level| rows.iter().map(|r| if &r[idx] == level { 1.0 } else { 0.0 }).collect())
        .collect();
    (levels, block)
}
