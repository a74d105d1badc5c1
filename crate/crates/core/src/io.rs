//! Text formats for operators (`SVNOP 1`) and sample sets (`SVNDATA 1`).
//!
//! Operator files store the thin SVD: a header `SVNOP 1 <d_y> <d_x> <r>`,
//! `r` lines holding the left singular vectors, one line of singular values
//! and `r` lines holding the right singular vectors. Dataset files start with
//! `# SVNDATA 1 <N> <d_x> <d_y>` followed by one comma-separated row per
//! sample, `x` coordinates first. Floats are written with 17 significant
//! digits so a write/read round trip is exact.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::erm::TrainingSet;
use crate::error::{Error, Result};
use crate::operator::LinearOperator;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_floats<'a>(line: usize, fields: impl Iterator<Item = &'a str>, expected: usize) -> Result<Vec<f64>> {
    let vals = fields
        .map(|f| {
            let f = f.trim();
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("bad number {f:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != expected {
        return Err(parse_err(line, format!("expected {expected} values, found {}", vals.len())));
    }
    Ok(vals)
}

/// Writes the operator's thin SVD (dense operators are factored first).
pub fn write_operator<W: Write>(mut w: W, t: &LinearOperator) -> Result<()> {
    let (u, s, v) = t.factors();
    let r = s.len();
    writeln!(w, "SVNOP 1 {} {} {}", t.d_y(), t.d_x(), r)?;
    let row = |col: Vec<f64>| col.into_iter().map(fmt_f64).collect::<Vec<_>>().join(" ");
    for k in 0..r {
        writeln!(w, "{}", row(u.column(k).iter().copied().collect()))?;
    }
    writeln!(w, "{}", row(s.iter().copied().collect()))?;
    for k in 0..r {
        writeln!(w, "{}", row(v.column(k).iter().copied().collect()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an operator file. The factors are validated (orthonormal columns,
/// nonnegative nonincreasing singular values).
pub fn read_operator<R: BufRead>(r: R) -> Result<LinearOperator> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let header = lines.first().ok_or_else(|| parse_err(1, "empty operator file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "SVNOP" {
        return Err(parse_err(1, "expected header `SVNOP 1 <d_y> <d_x> <r>`"));
    }
    if fields[1] != "1" {
        return Err(parse_err(1, format!("unsupported SVNOP version {}", fields[1])));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| parse_err(1, format!("bad size {s:?}")));
    let (d_y, d_x, rank) = (dim(fields[2])?, dim(fields[3])?, dim(fields[4])?);
    if rank > d_y.min(d_x) {
        return Err(parse_err(1, format!("rank {rank} exceeds min(d_y, d_x)")));
    }
    let body = &lines[1..];
    let needed = 2 * rank + 1;
    let extra_blank = body.iter().skip(needed).all(|l| l.trim().is_empty());
    if body.len() < needed && !(rank == 0 && body.is_empty()) || !extra_blank {
        return Err(parse_err(body.len().min(needed) + 1, format!("expected {needed} lines after the header")));
    }
    let line_vals = |idx: usize, expected: usize| -> Result<Vec<f64>> {
        let text = body.get(idx).map(String::as_str).unwrap_or("");
        parse_floats(idx + 2, text.split_whitespace(), expected)
    };
    let mut u = DMatrix::zeros(d_y, rank);
    let mut v = DMatrix::zeros(d_x, rank);
    for k in 0..rank {
        u.set_column(k, &DVector::from_vec(line_vals(k, d_y)?));
        v.set_column(k, &DVector::from_vec(line_vals(rank + 1 + k, d_x)?));
    }
    let s = DVector::from_vec(line_vals(rank, rank)?);
    LinearOperator::factored(u, s, v)
}

/// Writes a sample set, one `x..., y...` row per sample.
pub fn write_dataset<W: Write>(mut w: W, data: &TrainingSet) -> Result<()> {
    writeln!(w, "# SVNDATA 1 {} {} {}", data.len(), data.d_x(), data.d_y())?;
    for n in 0..data.len() {
        let row: Vec<String> = data
            .inputs()
            .column(n)
            .iter()
            .chain(data.outputs().column(n).iter())
            .map(|v| fmt_f64(*v))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample set. `C_x`, `C_y` default to the largest observed norms.
pub fn read_dataset<R: BufRead>(r: R, bounds: Option<(f64, f64)>) -> Result<TrainingSet> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.ok_or_else(|| parse_err(1, "empty dataset file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "#" || fields[1] != "SVNDATA" || fields[2] != "1" {
        return Err(parse_err(1, "expected header `# SVNDATA 1 <N> <d_x> <d_y>`"));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| parse_err(1, format!("bad size {s:?}")));
    let (n, d_x, d_y) = (dim(fields[3])?, dim(fields[4])?, dim(fields[5])?);
    if d_x == 0 || d_y == 0 {
        return Err(parse_err(1, "dimensions must be >= 1"));
    }
    let mut x = DMatrix::zeros(d_x, n);
    let mut y = DMatrix::zeros(d_y, n);
    let mut count = 0;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if count == n {
            return Err(parse_err(i + 2, format!("more than {n} samples")));
        }
        let vals = parse_floats(i + 2, line.split(','), d_x + d_y)?;
        x.set_column(count, &DVector::from_column_slice(&vals[..d_x]));
        y.set_column(count, &DVector::from_column_slice(&vals[d_x..]));
        count += 1;
    }
    if count != n {
        return Err(parse_err(count + 2, format!("header announces {n} samples, found {count}")));
    }
    match bounds {
        Some((c_x, c_y)) => TrainingSet::from_matrices(x, y, c_x, c_y),
        None => TrainingSet::with_observed_bounds(x, y),
    }
}
