//! CSV serialization of dense matrices, vectors and index pairs.
//!
//! Matrices are written as a `rows,cols` header line, a line with the two
//! dimensions, then one line per row. Values use the shortest decimal form
//! that round-trips exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linops::DenseMatrix;

pub fn write_matrix<W: Write>(mut w: W, m: &DenseMatrix) -> Result<()> {
    writeln!(w, "rows,cols")?;
    writeln!(w, "{},{}", m.rows(), m.cols())?;
    let mut line = String::new();
    for i in 0..m.rows() {
        line.clear();
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn read_matrix<R: BufRead>(r: R) -> Result<DenseMatrix> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "rows,cols" {
        return Err(parse_err(1, format!("expected header \"rows,cols\", got {header:?}")));
    }
    let dims = lines.next().transpose()?.ok_or_else(|| parse_err(2, "missing dimensions"))?;
    let parts: Vec<&str> = dims.trim().split(',').collect();
    let parse_dim = |s: &str| s.trim().parse::<usize>().map_err(|_| parse_err(2, format!("bad dimension {s:?}")));
    if parts.len() != 2 {
        return Err(parse_err(2, "dimension line needs two fields"));
    }
    let (rows, cols) = (parse_dim(parts[0])?, parse_dim(parts[1])?);
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 3;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.trim().split(',') {
            data.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("bad number {tok:?}")))?,
            );
        }
        if data.len() - before != cols {
            return Err(parse_err(lineno, format!("expected {cols} values, got {}", data.len() - before)));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(parse_err(0, format!("expected {rows} rows, got {seen}")));
    }
    DenseMatrix::from_row_major(rows, cols, data)
}

pub fn save_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    read_matrix(BufReader::new(File::open(path)?))
}

/// Vectors are stored as single-column matrices.
pub fn save_vector(path: &Path, v: &[f64]) -> Result<()> {
    save_matrix(path, &DenseMatrix::from_row_major(v.len(), 1, v.to_vec())?)
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    let m = load_matrix(path)?;
    if m.cols() != 1 && m.rows() != 1 {
        return Err(parse_err(0, format!("{}x{} is not a vector", m.rows(), m.cols())));
    }
    Ok(m.into_data())
}

/// Index pairs, one `i,j` per line after an `i,j` header.
pub fn save_pairs(path: &Path, pairs: &[(usize, usize)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "i,j")?;
    for (i, j) in pairs {
        writeln!(w, "{i},{j}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let mut it = line.trim().split(',');
        let mut next = || -> Result<usize> {
            it.next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err(n + 1, format!("bad index pair {line:?}")))
        };
        out.push((next()?, next()?));
    }
    Ok(out)
}
