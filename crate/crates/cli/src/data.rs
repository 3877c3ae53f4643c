//! Delimited-text ingestion and label encoding.

use std::collections::HashMap;
use std::path::Path;

use cat_anova::Category;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Labels of one feature; the code of a label is its position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCodes {
    pub name: String,
    pub labels: Vec<String>,
}

/// Per-feature bijection between raw labels and dense codes `0..N_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    features: Vec<FeatureCodes>,
    lookup: Vec<HashMap<String, Category>>,
}

impl Codebook {
    pub fn new(features: Vec<FeatureCodes>) -> CliResult<Self> {
        let mut lookup = Vec::with_capacity(features.len());
        for feature in &features {
            let mut map = HashMap::with_capacity(feature.labels.len());
            for (code, label) in feature.labels.iter().enumerate() {
                if map.insert(label.clone(), code as Category).is_some() {
                    return Err(CliError::Data(format!(
                        "feature '{}' lists label '{label}' twice",
                        feature.name
                    )));
                }
            }
            lookup.push(map);
        }
        Ok(Self { features, lookup })
    }

    /// Codebook of the observed labels. Labels sort numerically when every
    /// label of the feature is an integer, lexicographically otherwise.
    pub fn from_observed(names: &[String], columns: &[Vec<&str>]) -> CliResult<Self> {
        let features = names
            .iter()
            .zip(columns)
            .map(|(name, column)| {
                let mut labels: Vec<String> = column.iter().map(|s| s.to_string()).collect();
                labels.sort_unstable();
                labels.dedup();
                let numeric: Option<Vec<i64>> = labels.iter().map(|l| l.parse().ok()).collect();
                if let Some(values) = numeric {
                    let mut paired: Vec<(i64, String)> = values.into_iter().zip(labels).collect();
                    paired.sort();
                    labels = paired.into_iter().map(|(_, l)| l).collect();
                }
                FeatureCodes {
                    name: name.clone(),
                    labels,
                }
            })
            .collect();
        Self::new(features)
    }

    pub fn features(&self) -> &[FeatureCodes] {
        &self.features
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn cardinalities(&self) -> Vec<u32> {
        self.features.iter().map(|f| f.labels.len() as u32).collect()
    }

    pub fn encode(&self, feature: usize, label: &str) -> Option<Category> {
        self.lookup[feature].get(label).copied()
    }

    #[cfg(test)]
    pub fn decode(&self, feature: usize, code: Category) -> Option<&str> {
        self.features[feature].labels.get(code as usize).map(String::as_str)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

/// Training data: encoded rows with their target and weight, in file order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub codebook: Codebook,
    pub rows: Vec<Vec<Category>>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Raw table: header plus records with their 1-based line numbers.
pub struct Table {
    pub header: Vec<String>,
    pub records: Vec<(u64, csv::StringRecord)>,
}

pub fn delimiter_for(path: &Path, explicit: Option<char>) -> CliResult<u8> {
    let c = explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("tsv") || ext.eq_ignore_ascii_case("tab") => '\t',
        _ => ',',
    });
    u8::try_from(c)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| CliError::Usage(format!("delimiter '{c}' is not a single ASCII character")))
}

pub fn read_table(path: &Path, delimiter: u8) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        records.push((line, record));
    }
    Ok(Table { header, records })
}

fn csv_error(path: &Path, err: csv::Error) -> CliError {
    if let csv::ErrorKind::Io(_) = err.kind() {
        let csv::ErrorKind::Io(io) = err.into_kind() else { unreachable!() };
        return CliError::io(path, io);
    }
    let line = err.position().map(|p| p.line());
    match line {
        Some(line) => CliError::Data(format!("{}: line {line}: {err}", path.display())),
        None => CliError::Data(format!("{}: {err}", path.display())),
    }
}

fn parse_number(value: &str, what: &str, line: u64) -> CliResult<f64> {
    let value = value.trim();
    if value.is_empty() {
        return Err(CliError::Data(format!("line {line}: empty {what} value")));
    }
    let parsed: f64 = value
        .parse()
        .map_err(|_| CliError::Data(format!("line {line}: {what} value '{value}' is not a number")))?;
    if !parsed.is_finite() {
        return Err(CliError::Data(format!("line {line}: {what} value '{value}' is not finite")));
    }
    Ok(parsed)
}

pub fn column_index(header: &[String], name: &str, path: &Path) -> CliResult<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Data(format!("{}: no column named '{name}'", path.display())))
}

/// Loads a training file. Every column other than the target and the
/// optional weight column is a categorical feature.
pub fn load_dataset(path: &Path, delimiter: u8, target: &str, weight: Option<&str>) -> CliResult<Dataset> {
    let table = read_table(path, delimiter)?;
    let target_col = column_index(&table.header, target, path)?;
    let weight_col = weight.map(|w| column_index(&table.header, w, path)).transpose()?;
    if weight_col == Some(target_col) {
        return Err(CliError::Usage("weight and target columns must differ".into()));
    }
    let feature_cols: Vec<usize> = (0..table.header.len())
        .filter(|&c| c != target_col && Some(c) != weight_col)
        .collect();
    if table.records.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }

    let mut targets = Vec::with_capacity(table.records.len());
    let mut weights = Vec::with_capacity(table.records.len());
    let mut columns: Vec<Vec<&str>> = vec![Vec::with_capacity(table.records.len()); feature_cols.len()];
    for (line, record) in &table.records {
        targets.push(parse_number(&record[target_col], "target", *line)?);
        let w = match weight_col {
            Some(c) => parse_number(&record[c], "weight", *line)?,
            None => 1.0,
        };
        if w <= 0.0 {
            return Err(CliError::Data(format!("line {line}: weight must be positive, got {w}")));
        }
        weights.push(w);
        for (column, &c) in columns.iter_mut().zip(&feature_cols) {
            column.push(record[c].trim());
        }
    }
    let names: Vec<String> = feature_cols.iter().map(|&c| table.header[c].clone()).collect();
    let codebook = Codebook::from_observed(&names, &columns)?;
    let rows = (0..targets.len())
        .map(|k| {
            columns
                .iter()
                .enumerate()
                .map(|(i, column)| codebook.encode(i, column[k]).expect("label observed"))
                .collect()
        })
        .collect();
    Ok(Dataset {
        codebook,
        rows,
        targets,
        weights,
    })
}
