//! Trait-table ingestion: parse delimited text, encode categorical columns,
//! min-max normalize, and score each unit's deviation from the per-column maxima.

use std::collections::BTreeMap;
use std::io::Read;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Text(String),
}

/// Raw ingested rows: unit ids plus an n×m grid of mixed cells.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub unit_ids: Vec<String>,
    pub columns: Vec<(String, ColumnKind)>,
    pub cells: Vec<Vec<Cell>>,
}

impl FeatureTable {
    pub fn n(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }
}

/// Column kinds declared by name. Columns absent from the schema are numeric.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Schema {
    pub kinds: BTreeMap<String, ColumnKind>,
}

/// Ordered category labels per categorical column; label position is its code.
pub type EncodingMaps = BTreeMap<String, Vec<String>>;

/// Min-max-normalized values in [0,1] with per-unit deviation scores.
/// Column extrema are retained so audits can reverse the scaling.
#[derive(Debug, Clone)]
pub struct NormalizedTable {
    pub values: Array2<f64>,
    pub deviations: Array1<f64>,
    pub column_mins: Vec<f64>,
    pub column_maxs: Vec<f64>,
}

impl NormalizedTable {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }
}

/// Parse delimiter-separated text with a header row; the first column is the
/// unit id. Rows are reported 1-based (header excluded) in errors.
pub fn parse_table(source: impl Read, schema: &Schema, delimiter: u8) -> Result<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(source);

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 2 {
        return Err(Error::NoColumns);
    }
    let trait_names = &headers[1..];
    for name in schema.kinds.keys() {
        if !trait_names.iter().any(|t| t == name) {
            return Err(Error::UnknownColumn(name.clone()));
        }
    }
    let columns: Vec<(String, ColumnKind)> = trait_names
        .iter()
        .map(|name| {
            let kind = schema
                .kinds
                .get(name)
                .copied()
                .unwrap_or(ColumnKind::Numeric);
            (name.clone(), kind)
        })
        .collect();

    let m = columns.len();
    let mut unit_ids: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut cells: Vec<Vec<Cell>> = Vec::new();

    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        if record.len() != m + 1 {
            return Err(Error::RaggedRow { row, expected: m + 1, found: record.len() });
        }
        let id = record[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id, row });
        }
        let mut parsed = Vec::with_capacity(m);
        for (j, raw) in record.iter().skip(1).enumerate() {
            let raw = raw.trim();
            if raw.is_empty() {
                return Err(Error::MissingCell { row, column: columns[j].0.clone() });
            }
            match columns[j].1 {
                ColumnKind::Numeric => {
                    let v: f64 = raw.parse().map_err(|_| Error::BadNumeric {
                        row,
                        column: columns[j].0.clone(),
                        value: raw.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::BadNumeric {
                            row,
                            column: columns[j].0.clone(),
                            value: raw.to_string(),
                        });
                    }
                    parsed.push(Cell::Number(v));
                }
                ColumnKind::Categorical => parsed.push(Cell::Text(raw.to_string())),
            }
        }
        unit_ids.push(id);
        cells.push(parsed);
    }

    if unit_ids.len() < 2 {
        return Err(Error::TooFewUnits);
    }
    Ok(FeatureTable { unit_ids, columns, cells })
}

/// Replace categorical cells by their map position; numeric cells pass through.
pub fn encode_categorical(table: &FeatureTable, maps: &EncodingMaps) -> Result<FeatureTable> {
    let mut codes: Vec<Option<BTreeMap<&str, f64>>> = Vec::with_capacity(table.m());
    for (name, kind) in &table.columns {
        match kind {
            ColumnKind::Numeric => codes.push(None),
            ColumnKind::Categorical => {
                let labels = maps.get(name).ok_or_else(|| {
                    Error::Config(format!("no encoding map for categorical column {name:?}"))
                })?;
                let mut map = BTreeMap::new();
                for (i, label) in labels.iter().enumerate() {
                    if map.insert(label.as_str(), i as f64).is_some() {
                        return Err(Error::Config(format!(
                            "label {label:?} listed twice in encoding for column {name:?}"
                        )));
                    }
                }
                codes.push(Some(map));
            }
        }
    }

    let mut cells = Vec::with_capacity(table.n());
    for row in &table.cells {
        let mut encoded = Vec::with_capacity(table.m());
        for (j, cell) in row.iter().enumerate() {
            match (cell, &codes[j]) {
                (Cell::Number(v), _) => encoded.push(Cell::Number(*v)),
                (Cell::Text(label), Some(map)) => match map.get(label.as_str()) {
                    Some(code) => encoded.push(Cell::Number(*code)),
                    None => {
                        return Err(Error::UnmappedLabel {
                            column: table.columns[j].0.clone(),
                            label: label.clone(),
                        })
                    }
                },
                (Cell::Text(label), None) => {
                    return Err(Error::UnmappedLabel {
                        column: table.columns[j].0.clone(),
                        label: label.clone(),
                    })
                }
            }
        }
        cells.push(encoded);
    }

    let columns = table
        .columns
        .iter()
        .map(|(name, _)| (name.clone(), ColumnKind::Numeric))
        .collect();
    Ok(FeatureTable { unit_ids: table.unit_ids.clone(), columns, cells })
}

/// Restrict the table to the named columns, in the order given.
pub fn select_columns(table: &FeatureTable, names: &[String]) -> Result<FeatureTable> {
    let mut indices = Vec::with_capacity(names.len());
    for name in names {
        let j = table
            .columns
            .iter()
            .position(|(c, _)| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
        indices.push(j);
    }
    if indices.is_empty() {
        return Err(Error::NoColumns);
    }
    let columns = indices.iter().map(|&j| table.columns[j].clone()).collect();
    let cells = table
        .cells
        .iter()
        .map(|row| indices.iter().map(|&j| row[j].clone()).collect())
        .collect();
    Ok(FeatureTable { unit_ids: table.unit_ids.clone(), columns, cells })
}

/// Min-max normalize each column to [0,1] and compute deviation scores.
///
/// Constant columns map to all zeros and contribute nothing to any deviation:
/// a constant trait carries no discriminating information. The deviation of
/// unit i is the summed gap to each normalized column's maximum, so
/// 0 ≤ dev_i ≤ m.
pub fn normalize(table: &FeatureTable) -> Result<NormalizedTable> {
    let (n, m) = (table.n(), table.m());
    let mut raw = Array2::<f64>::zeros((n, m));
    for (i, row) in table.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            match cell {
                Cell::Number(v) => raw[(i, j)] = *v,
                Cell::Text(_) => {
                    return Err(Error::Config(format!(
                        "column {:?} is categorical; encode it before normalizing",
                        table.columns[j].0
                    )))
                }
            }
        }
    }

    let mut column_mins = vec![0.0; m];
    let mut column_maxs = vec![0.0; m];
    let mut values = Array2::<f64>::zeros((n, m));
    for j in 0..m {
        let col = raw.column(j);
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        column_mins[j] = min;
        column_maxs[j] = max;
        if max > min {
            let span = max - min;
            for i in 0..n {
                values[(i, j)] = (raw[(i, j)] - min) / span;
            }
        }
        // constant column: already zeros
    }

    let mut deviations = Array1::<f64>::zeros(n);
    for j in 0..m {
        let col_max = values.column(j).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..n {
            deviations[i] += col_max - values[(i, j)];
        }
    }

    Ok(NormalizedTable { values, deviations, column_mins, column_maxs })
}
