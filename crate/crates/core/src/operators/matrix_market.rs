//! Matrix Market coordinate I/O and a plain whitespace-separated dense format.
//!
//! Only `matrix coordinate real {general|symmetric}` is supported. Symmetric
//! files store the lower triangle; on read both triangles are materialized.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::csr::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(&text, &path.display().to_string())
}

/// Parses Matrix Market text; `origin` is used in error messages.
pub fn parse_matrix_market(text: &str, origin: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(origin, 1, "empty file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(origin, 1, "missing %%MatrixMarket matrix header"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(origin, 1, format!("unsupported layout '{}'", tokens[2])));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(origin, 1, format!("unsupported field '{}'", tokens[3])));
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(origin, 1, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (idx, raw) in lines {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let Some((nrows, ncols, nnz)) = size else {
            if fields.len() != 3 {
                return Err(parse_err(origin, lineno, "expected 'rows cols nnz'"));
            }
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| parse_err(origin, lineno, format!("bad size field '{s}'")))
            };
            size = Some((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
            triplets.reserve(size.unwrap().2);
            continue;
        };
        if fields.len() != 3 {
            return Err(parse_err(origin, lineno, "expected 'row col value'"));
        }
        let r: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(origin, lineno, format!("bad row index '{}'", fields[0])))?;
        let c: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(origin, lineno, format!("bad column index '{}'", fields[1])))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(origin, lineno, format!("bad value '{}'", fields[2])))?;
        if r == 0 || c == 0 || r > nrows || c > ncols {
            return Err(parse_err(origin, lineno, format!("index ({r}, {c}) out of range")));
        }
        if triplets.len() >= nnz && symmetry == Symmetry::General {
            return Err(parse_err(origin, lineno, "more entries than declared"));
        }
        match symmetry {
            Symmetry::General => triplets.push((r - 1, c - 1, v)),
            Symmetry::Symmetric => {
                if c > r {
                    return Err(parse_err(origin, lineno, "symmetric file has upper-triangle entry"));
                }
                triplets.push((r - 1, c - 1, v));
                if r != c {
                    triplets.push((c - 1, r - 1, v));
                }
            }
        }
    }
    let (nrows, ncols, _) = size.ok_or_else(|| parse_err(origin, 1, "missing size line"))?;
    CsrMatrix::from_triplets(nrows, ncols, triplets)
}

/// Renders `m` in coordinate format. With [`Symmetry::Symmetric`] only the
/// lower triangle is written and `m` must be symmetric.
pub fn format_matrix_market(m: &CsrMatrix, symmetry: Symmetry) -> Result<String> {
    let entries: Vec<(usize, usize, f64)> = match symmetry {
        Symmetry::General => m.triplets().collect(),
        Symmetry::Symmetric => {
            if !m.is_symmetric(0.0) {
                return Err(Error::invalid("matrix is not symmetric"));
            }
            m.triplets().filter(|&(r, c, _)| c <= r).collect()
        }
    };
    let kind = match symmetry {
        Symmetry::General => "general",
        Symmetry::Symmetric => "symmetric",
    };
    let mut out = format!("%%MatrixMarket matrix coordinate real {kind}\n");
    let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), entries.len());
    for (r, c, v) in entries {
        let _ = writeln!(out, "{} {} {:e}", r + 1, c + 1, v);
    }
    Ok(out)
}

pub fn write_matrix_market(path: impl AsRef<Path>, m: &CsrMatrix, symmetry: Symmetry) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix_market(m, symmetry)?).map_err(|e| Error::io(path, e))
}

/// Dense text: one row per line, whitespace-separated values, `#` comments.
pub fn parse_dense_text(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(origin, idx + 1, format!("bad value '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    origin,
                    idx + 1,
                    format!("row has {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}

pub fn read_dense_text(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dense_text(&text, &path.display().to_string())
}

pub fn format_dense_text(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
