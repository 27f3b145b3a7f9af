//! Dense CSV matrices (no header, row-major) with an optional sidecar
//! descriptor `<file>.json` holding `{rows, cols, role}`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    X,
    H,
    Q,
    #[serde(rename = "y")]
    Y,
    /// A structure kernel passed to a screening test.
    #[serde(rename = "K")]
    K,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub rows: usize,
    pub cols: usize,
    pub role: Role,
}

pub fn descriptor_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Parses CSV text. Blank lines are skipped; every other line must have the
/// same number of finite fields.
pub fn parse_matrix(text: &str, source: &str) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::input(format!("{source}: {e}")))?;
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::input(format!(
                    "{source}: line {line}, column {}: cannot parse {field:?} as a number",
                    col + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::input(format!(
                    "{source}: line {line}, column {}: non-finite value {field}",
                    col + 1
                )));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CliError::input(format!(
                    "{source}: ragged row {} (line {line}) has {} fields, expected {}",
                    rows.len() + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{source}: no data rows")));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

/// Reads a matrix and, when a sidecar descriptor exists, checks its shape
/// and role.
pub fn load_matrix(path: &Path, role: Role) -> Result<DMatrix<f64>, CliError> {
    let source = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{source}: {e}")))?;
    let m = parse_matrix(&text, &source)?;
    let side = descriptor_path(path);
    if side.exists() {
        let raw = fs::read_to_string(&side)
            .map_err(|e| CliError::input(format!("{}: {e}", side.display())))?;
        let d: Descriptor = serde_json::from_str(&raw)
            .map_err(|e| CliError::input(format!("{}: {e}", side.display())))?;
        if d.role != role {
            return Err(CliError::input(format!(
                "{source}: descriptor role {:?} but the file was passed as {role:?}",
                d.role
            )));
        }
        if (d.rows, d.cols) != m.shape() {
            return Err(CliError::input(format!(
                "{source}: descriptor shape {}x{} but the file holds {}x{}",
                d.rows,
                d.cols,
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(m)
}

/// A response stored either as one column or as one row.
pub fn load_vector(path: &Path) -> Result<DVector<f64>, CliError> {
    let m = load_matrix(path, Role::Y)?;
    match m.shape() {
        (_, 1) => Ok(m.column(0).into_owned()),
        (1, _) => Ok(m.row(0).transpose()),
        (r, c) => Err(CliError::input(format!(
            "{}: response must be a single row or column, found {r}x{c}",
            path.display()
        ))),
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_value(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
fn write_matrix(path: &Path, m: &DMatrix<f64>, role: Role) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::input(format!("{}: {e}", path.display()));
    fs::write(path, matrix_to_csv(m)).map_err(io)?;
    let d = Descriptor {
        rows: m.nrows(),
        cols: m.ncols(),
        role,
    };
    let text = serde_json::to_string(&d).map_err(|e| CliError::input(e.to_string()))?;
    fs::write(descriptor_path(path), text).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_matrix() {
        let m = parse_matrix("1,2\n3,4\n", "t").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn ragged_row_names_the_row() {
        let err = parse_matrix("1,2\n3\n", "t").unwrap_err().to_string();
        assert!(err.contains("ragged row 2"), "{err}");
    }

    #[test]
    fn rejects_nan_and_text() {
        assert!(parse_matrix("1,NaN\n", "t").unwrap_err().to_string().contains("non-finite"));
        assert!(parse_matrix("1,inf\n", "t").is_err());
        let err = parse_matrix("1,2\n3,x\n", "t").unwrap_err().to_string();
        assert!(err.contains("line 2, column 2"), "{err}");
    }

    #[test]
    fn round_trip_is_exact() {
        let vals = [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 2.0f64.sqrt()];
        let m = DMatrix::from_row_slice(2, 3, &vals);
        let back = parse_matrix(&matrix_to_csv(&m), "t").unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn descriptor_shape_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        write_matrix(&p, &m, Role::X).unwrap();
        assert_eq!(load_matrix(&p, Role::X).unwrap(), m);
        assert!(load_matrix(&p, Role::H).is_err());
        fs::write(descriptor_path(&p), r#"{"rows":3,"cols":2,"role":"X"}"#).unwrap();
        let err = load_matrix(&p, Role::X).unwrap_err().to_string();
        assert!(err.contains("3x2"), "{err}");
    }
}
