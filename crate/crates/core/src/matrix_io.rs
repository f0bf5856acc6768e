//! Plain-text matrices: a `rows cols` header line followed by the entries in
//! row-major order, separated by whitespace.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::invalid("matrix text is empty"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::invalid(format!("bad matrix header `{header}`: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::invalid(format!(
            "matrix header needs `rows cols`, got `{header}`"
        )));
    };
    let values: Vec<f64> = lines
        .flat_map(str::split_whitespace)
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad matrix entry `{t}`: {e}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != rows * cols {
        return Err(Error::invalid(format!(
            "matrix declares {rows}x{cols} but has {} entries",
            values.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Entries use Rust's shortest round-trip formatting.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}
