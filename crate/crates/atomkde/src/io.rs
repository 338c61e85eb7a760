//! CSV input.
//!
//! Comma-separated, `.` decimal point, one observation per row. A single
//! header line is recognised when the first row does not parse as numbers.
//! Rows are numbered from 1 as lines in the file, so a header is row 1.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use atomkde_core::Dataset;

#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {source}")]
    Csv {
        path: String,
        row: u64,
        source: csv::Error,
    },
    #[error("{path}: row {row}, column {column}: cannot parse '{value}' as a number")]
    Parse {
        path: String,
        row: u64,
        column: usize,
        value: String,
    },
    #[error("{path}: row {row}, column {column}: value is not finite")]
    NonFinite {
        path: String,
        row: u64,
        column: usize,
    },
    #[error("{path}: row {row}: expected {expected} columns, found {found}")]
    Ragged {
        path: String,
        row: u64,
        expected: usize,
        found: usize,
    },
    #[error("{path}: row {row}: expected a label (0/1 or true/false), found '{value}'")]
    Label {
        path: String,
        row: u64,
        value: String,
    },
}

struct Table {
    rows: Vec<(u64, Vec<String>)>,
    columns: Option<usize>,
}

fn read_table(path: &Path, reader: impl Read) -> Result<Table, InputError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|source| InputError::Csv {
            path: path.display().to_string(),
            row: source.position().map_or(k as u64 + 1, |p| p.line()),
            source,
        })?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line());
        rows.push((line, rec.iter().map(str::to_owned).collect::<Vec<_>>()));
    }
    let columns = rows.first().map(|(_, r)| r.len());
    if rows.first().is_some_and(|(_, r)| looks_like_header(r)) {
        rows.remove(0);
    }
    Ok(Table { rows, columns })
}

// A header is a row none of whose fields is numeric; a row mixing numbers and
// text is a malformed data row.
fn looks_like_header(row: &[String]) -> bool {
    row.iter().all(|f| f.parse::<f64>().is_err())
}

fn open(path: &Path) -> Result<File, InputError> {
    File::open(path).map_err(|source| InputError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a dataset; the dimension is the column count of the first row.
pub fn read_dataset(path: &Path) -> Result<Dataset, InputError> {
    parse_dataset(path, open(path)?)
}

pub fn parse_dataset(path: &Path, reader: impl Read) -> Result<Dataset, InputError> {
    let table = read_table(path, reader)?;
    let dim = table.columns.unwrap_or(1).max(1);
    let mut values = Vec::with_capacity(table.rows.len() * dim);
    for (row, fields) in &table.rows {
        if fields.len() != dim {
            return Err(InputError::Ragged {
                path: path.display().to_string(),
                row: *row,
                expected: dim,
                found: fields.len(),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| InputError::Parse {
                path: path.display().to_string(),
                row: *row,
                column: c + 1,
                value: f.clone(),
            })?;
            if !v.is_finite() {
                return Err(InputError::NonFinite {
                    path: path.display().to_string(),
                    row: *row,
                    column: c + 1,
                });
            }
            values.push(v);
        }
    }
    Ok(Dataset::new(dim, values).expect("rows validated above"))
}

/// Reads one label per row; `1`/`true` marks a draw from the discrete component.
pub fn read_labels(path: &Path) -> Result<Vec<bool>, InputError> {
    parse_labels(path, open(path)?)
}

pub fn parse_labels(path: &Path, reader: impl Read) -> Result<Vec<bool>, InputError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|source| InputError::Csv {
            path: path.display().to_string(),
            row: k as u64 + 1,
            source,
        })?;
        let row = rec.position().map_or(k as u64 + 1, |p| p.line());
        if rec.len() != 1 {
            return Err(InputError::Ragged {
                path: path.display().to_string(),
                row,
                expected: 1,
                found: rec.len(),
            });
        }
        let field = &rec[0];
        let label = match field.to_ascii_lowercase().as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            _ if k == 0 => continue,
            _ => {
                return Err(InputError::Label {
                    path: path.display().to_string(),
                    row,
                    value: field.to_owned(),
                })
            }
        };
        out.push(label);
    }
    Ok(out)
}
