//! Two-class CSV datasets: one label column, every other column numeric.

use std::path::PathBuf;

use hdlda_core::classifier::LabeledDataset;
use hdlda_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetFile, LabelColumn};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("delimiter {0:?} is not an ASCII character")]
    Delimiter(char),
    #[error("label column {0} not found")]
    NoLabelColumn(String),
    #[error("missing value at line {line}, column {column}")]
    Missing { line: u64, column: String },
    #[error("non-numeric value {value:?} at line {line}, column {column}")]
    NonNumeric { line: u64, column: String, value: String },
    #[error("line {line} has {got} fields, expected {expected}")]
    Ragged { line: u64, expected: usize, got: usize },
    #[error("expected exactly two label values, found {0:?}")]
    LabelCount(Vec<String>),
    #[error("need at least 5 rows, got {0}")]
    TooFewRows(usize),
    #[error("no feature columns")]
    NoFeatures,
    #[error(transparent)]
    Model(#[from] hdlda_core::Error),
}

/// Original label value and the group (1 or 2) it maps to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub label: String,
    pub group: u8,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: LabeledDataset,
    /// Groups are assigned by first appearance.
    pub labels: Vec<LabelAssignment>,
    pub feature_names: Vec<String>,
}

pub fn ingest_csv(file: &DatasetFile) -> Result<Ingested, IngestError> {
    if !file.delimiter.is_ascii() {
        return Err(IngestError::Delimiter(file.delimiter));
    }
    let delimiter = file.delimiter as u8;
    let io_err = |source| IngestError::Io { path: file.path.clone(), source };
    let handle = std::fs::File::open(&file.path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(file.has_header)
        .flexible(true)
        .from_reader(std::io::BufReader::new(handle));

    let header: Option<Vec<String>> =
        if file.has_header { Some(reader.headers()?.iter().map(|h| h.trim().to_string()).collect()) } else { None };
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        records.push(rec);
    }
    let width = header.as_ref().map(Vec::len).or_else(|| records.first().map(|r| r.len())).unwrap_or(0);
    let names: Vec<String> = header.unwrap_or_else(|| (0..width).map(|i| i.to_string()).collect());
    let label_idx = match &file.label_column {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(IngestError::NoLabelColumn(i.to_string())),
        LabelColumn::Name(n) => {
            names.iter().position(|h| h == n).ok_or_else(|| IngestError::NoLabelColumn(n.clone()))?
        }
    };
    if width < 2 {
        return Err(IngestError::NoFeatures);
    }

    let mut labels: Vec<LabelAssignment> = Vec::new();
    let mut groups = Vec::with_capacity(records.len());
    let mut values = Vec::with_capacity(records.len() * (width - 1));
    for rec in &records {
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(IngestError::Ragged { line, expected: width, got: rec.len() });
        }
        for (j, field) in rec.iter().enumerate() {
            let field = field.trim();
            if field.is_empty() {
                return Err(IngestError::Missing { line, column: names[j].clone() });
            }
            if j == label_idx {
                let group = match labels.iter().find(|l| l.label == field) {
                    Some(l) => l.group,
                    None => {
                        let group = labels.len() as u8 + 1;
                        labels.push(LabelAssignment { label: field.to_string(), group });
                        if labels.len() > 2 {
                            return Err(IngestError::LabelCount(labels.into_iter().map(|l| l.label).collect()));
                        }
                        group
                    }
                };
                groups.push(group);
            } else {
                let x: f64 = field.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| {
                    IngestError::NonNumeric { line, column: names[j].clone(), value: field.to_string() }
                })?;
                values.push(x);
            }
        }
    }
    if labels.len() != 2 {
        return Err(IngestError::LabelCount(labels.into_iter().map(|l| l.label).collect()));
    }
    if groups.len() < 5 {
        return Err(IngestError::TooFewRows(groups.len()));
    }
    let features = Matrix::from_vec(groups.len(), width - 1, values)?;
    let dataset = LabeledDataset::new(features, groups)?;
    let feature_names = names.into_iter().enumerate().filter(|(j, _)| *j != label_idx).map(|(_, n)| n).collect();
    Ok(Ingested { dataset, labels, feature_names })
}
