//! Configuration matrices: typed cells, CSV ingestion and column domains.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single cell. Numeric columns hold naturals, every other column holds text.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    Nat(u64),
    Text(String),
}

impl CellValue {
    pub fn text(s: impl Into<String>) -> Self {
        CellValue::Text(s.into())
    }

    pub fn as_nat(&self) -> Option<u64> {
        match self {
            CellValue::Nat(n) => Some(*n),
            CellValue::Text(_) => None,
        }
    }

    /// Reads a trimmed token, preferring the natural-number reading.
    pub fn parse_token(raw: &str) -> Option<Self> {
        let t = raw.trim();
        if t.is_empty() {
            return None;
        }
        Some(match parse_nat(t) {
            Some(n) => CellValue::Nat(n),
            None => CellValue::Text(t.to_string()),
        })
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Nat(n) => write!(f, "{n}"),
            CellValue::Text(s) => f.write_str(s),
        }
    }
}

fn parse_nat(t: &str) -> Option<u64> {
    if t.bytes().all(|b| b.is_ascii_digit()) {
        t.parse().ok()
    } else {
        None
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("matrix has no data rows")]
    EmptyMatrix,
    #[error("matrix has no columns")]
    NoColumns,
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("rows {first} and {second} are identical configurations")]
    DuplicateRow { first: usize, second: usize },
    #[error("empty cell at row {row}, column {column:?}")]
    EmptyCell { row: usize, column: String },
    #[error("column {column:?} mixes numeric and textual cells")]
    MixedColumn { column: String },
    #[error("column index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// How to read a CSV file before synthesis.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionHints {
    /// Columns excluded from the matrix; the first one labels the rows.
    #[serde(default)]
    pub identifier_columns: Vec<String>,
    /// Drop repeated configurations instead of rejecting them.
    #[serde(default)]
    pub dedup: bool,
    /// Treat a column named like an identifier (`id`, `name`, ...) with
    /// all-distinct values as an identifier column.
    #[serde(default = "yes")]
    pub auto_identifier: bool,
}

fn yes() -> bool {
    true
}

impl IngestionHints {
    pub fn new() -> Self {
        IngestionHints { identifier_columns: Vec::new(), dedup: false, auto_identifier: true }
    }
}

const IDENTIFIER_HEADERS: [&str; 5] = ["identifier", "id", "name", "product", "configuration"];

/// An M×N grid of typed cells (rows are configurations).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigurationMatrix {
    variables: Vec<String>,
    rows: Vec<Vec<CellValue>>,
    labels: Vec<String>,
    identifier_columns: Vec<String>,
    duplicates_dropped: usize,
}

impl ConfigurationMatrix {
    /// Builds a matrix from already typed rows, enforcing the shape invariants.
    pub fn new(variables: Vec<String>, rows: Vec<Vec<CellValue>>) -> Result<Self, MatrixError> {
        let labels = (1..=rows.len()).map(|k| format!("row{k}")).collect();
        Self::with_labels(variables, rows, labels, false)
    }

    /// Like [`new`](Self::new) with explicit row labels; with `dedup`,
    /// repeated rows are dropped (and counted) instead of rejected.
    pub fn with_labels(
        variables: Vec<String>,
        rows: Vec<Vec<CellValue>>,
        labels: Vec<String>,
        dedup: bool,
    ) -> Result<Self, MatrixError> {
        if variables.is_empty() {
            return Err(MatrixError::NoColumns);
        }
        let mut names = HashSet::new();
        for v in &variables {
            if !names.insert(v.as_str()) {
                return Err(MatrixError::DuplicateColumn(v.clone()));
            }
        }
        if rows.is_empty() {
            return Err(MatrixError::EmptyMatrix);
        }
        let n = variables.len();
        for (k, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MatrixError::RaggedRow { row: k + 1, found: row.len(), expected: n });
            }
            for (j, cell) in row.iter().enumerate() {
                if matches!(cell, CellValue::Text(s) if s.trim().is_empty()) {
                    return Err(MatrixError::EmptyCell { row: k + 1, column: variables[j].clone() });
                }
            }
        }
        for j in 0..n {
            let nat = rows.iter().filter(|r| matches!(r[j], CellValue::Nat(_))).count();
            if nat != 0 && nat != rows.len() {
                return Err(MatrixError::MixedColumn { column: variables[j].clone() });
            }
        }
        let mut seen: HashMap<&[CellValue], usize> = HashMap::new();
        let mut keep = Vec::with_capacity(rows.len());
        for (k, row) in rows.iter().enumerate() {
            match seen.get(row.as_slice()) {
                Some(&first) if !dedup => {
                    return Err(MatrixError::DuplicateRow { first: first + 1, second: k + 1 })
                }
                Some(_) => {}
                None => {
                    seen.insert(row.as_slice(), k);
                    keep.push(k);
                }
            }
        }
        let duplicates_dropped = rows.len() - keep.len();
        let (rows, labels) = if duplicates_dropped == 0 {
            (rows, labels)
        } else {
            log::warn!("dropped {duplicates_dropped} duplicate configuration(s)");
            let rows_out = keep.iter().map(|&k| rows[k].clone()).collect();
            let labels_out = keep.iter().map(|&k| labels[k].clone()).collect();
            (rows_out, labels_out)
        };
        Ok(ConfigurationMatrix {
            variables,
            rows,
            labels,
            identifier_columns: Vec::new(),
            duplicates_dropped,
        })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn rows(&self) -> &[Vec<CellValue>] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[CellValue] {
        &self.rows[k]
    }

    /// Row labels taken from the identifier column, or `rowK`.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Identifier columns removed at ingestion.
    pub fn identifier_columns(&self) -> &[String] {
        &self.identifier_columns
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    /// M, the number of configurations.
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// N, the number of variables.
    pub fn n_cols(&self) -> usize {
        self.variables.len()
    }

    pub fn cell(&self, k: usize, j: usize) -> &CellValue {
        &self.rows[k][j]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn is_numeric(&self, j: usize) -> bool {
        matches!(self.rows[0][j], CellValue::Nat(_))
    }

    /// Distinct values of column `j` in first-occurrence order.
    pub fn column_domain(&self, j: usize) -> Result<Vec<CellValue>, MatrixError> {
        if j >= self.n_cols() {
            return Err(MatrixError::IndexOutOfRange(j));
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for row in &self.rows {
            if seen.insert(&row[j]) {
                out.push(row[j].clone());
            }
        }
        Ok(out)
    }

    /// Largest column domain.
    pub fn max_domain_size(&self) -> usize {
        (0..self.n_cols()).map(|j| self.column_domain(j).map_or(0, |d| d.len())).max().unwrap_or(0)
    }

    /// A copy without the named columns; rows that collapse are deduplicated
    /// or rejected according to `dedup`.
    pub fn without_columns(&self, drop: &[String], dedup: bool) -> Result<Self, MatrixError> {
        for d in drop {
            if self.column_index(d).is_none() {
                return Err(MatrixError::UnknownColumn(d.clone()));
            }
        }
        let keep: Vec<usize> =
            (0..self.n_cols()).filter(|&j| !drop.contains(&self.variables[j])).collect();
        let variables = keep.iter().map(|&j| self.variables[j].clone()).collect();
        let rows = self.rows.iter().map(|r| keep.iter().map(|&j| r[j].clone()).collect()).collect();
        let mut m = Self::with_labels(variables, rows, self.labels.clone(), dedup)?;
        m.identifier_columns = self.identifier_columns.clone();
        m.identifier_columns.extend(drop.iter().cloned());
        m.duplicates_dropped += self.duplicates_dropped;
        Ok(m)
    }

    /// Writes the matrix back as CSV (identifier columns are not restored).
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.variables).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string())).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

/// Parses CSV text (header row first) into a matrix.
pub fn parse_matrix(csv_text: &str, hints: &IngestionHints) -> Result<ConfigurationMatrix, MatrixError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| MatrixError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(MatrixError::NoColumns);
    }
    let mut raw: Vec<Vec<String>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| MatrixError::Csv(e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(MatrixError::RaggedRow { row: k + 1, found: rec.len(), expected: header.len() });
        }
        raw.push(rec.iter().map(str::to_string).collect());
    }
    if raw.is_empty() {
        return Err(MatrixError::EmptyMatrix);
    }
    for (k, row) in raw.iter().enumerate() {
        if let Some(j) = row.iter().position(|c| c.is_empty()) {
            return Err(MatrixError::EmptyCell { row: k + 1, column: header[j].clone() });
        }
    }

    let mut ids: Vec<usize> = Vec::new();
    for name in &hints.identifier_columns {
        let j = header.iter().position(|h| h == name).ok_or_else(|| MatrixError::UnknownColumn(name.clone()))?;
        if !ids.contains(&j) {
            ids.push(j);
        }
    }
    if hints.auto_identifier {
        for (j, h) in header.iter().enumerate() {
            let lower = h.to_ascii_lowercase();
            if !ids.contains(&j) && IDENTIFIER_HEADERS.contains(&lower.as_str()) {
                let distinct: HashSet<&str> = raw.iter().map(|r| r[j].as_str()).collect();
                if distinct.len() == raw.len() && header.len() - ids.len() > 1 {
                    ids.push(j);
                }
            }
        }
    }

    let keep: Vec<usize> = (0..header.len()).filter(|j| !ids.contains(j)).collect();
    if keep.is_empty() {
        return Err(MatrixError::NoColumns);
    }
    let mut typed: Vec<Vec<CellValue>> = vec![Vec::with_capacity(keep.len()); raw.len()];
    for &j in &keep {
        let numeric: Vec<Option<u64>> = raw.iter().map(|r| parse_nat(&r[j])).collect();
        let n_nat = numeric.iter().filter(|n| n.is_some()).count();
        if n_nat != 0 && n_nat != raw.len() {
            return Err(MatrixError::MixedColumn { column: header[j].clone() });
        }
        for (k, row) in raw.iter().enumerate() {
            typed[k].push(match numeric[k] {
                Some(n) => CellValue::Nat(n),
                None => CellValue::Text(row[j].clone()),
            });
        }
    }
    let labels = match ids.first() {
        Some(&j) => raw.iter().map(|r| r[j].clone()).collect(),
        None => (1..=raw.len()).map(|k| format!("row{k}")).collect(),
    };
    let variables = keep.iter().map(|&j| header[j].clone()).collect();
    let mut m = ConfigurationMatrix::with_labels(variables, typed, labels, hints.dedup)?;
    m.identifier_columns = ids.iter().map(|&j| header[j].clone()).collect();
    Ok(m)
}
