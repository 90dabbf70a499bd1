//! Matrix Market reader and writer (real, coordinate and array).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{MorError, Result};
use crate::sparse::{RealMatrix, SparseMatrix};

fn bad(msg: impl Into<String>) -> MorError {
    MorError::MatrixMarket(msg.into())
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

/// Parses Matrix Market text into a matrix, keeping sparse storage for
/// coordinate files.
pub fn parse(text: &str) -> Result<RealMatrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let fields: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(bad(format!("bad header `{header}`")));
    }
    let coordinate = match fields[2].as_str() {
        "coordinate" => true,
        "array" => false,
        f => return Err(bad(format!("unsupported format `{f}`"))),
    };
    let pattern = match fields[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        f => return Err(bad(format!("unsupported field `{f}`"))),
    };
    let sym = match fields[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        f => return Err(bad(format!("unsupported symmetry `{f}`"))),
    };
    let mut body = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size_line = body.next().ok_or_else(|| bad("missing size line"))?;
    let sizes: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad size line `{size_line}`"))))
        .collect::<Result<_>>()?;
    let num = |t: &str| -> Result<f64> { t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}`"))) };
    if coordinate {
        let [nr, nc, nnz] = sizes[..] else { return Err(bad("coordinate size line needs 3 entries")) };
        let mut trips = Vec::with_capacity(nnz * if sym == Symmetry::General { 1 } else { 2 });
        let mut count = 0;
        for line in body {
            let tok: Vec<&str> = line.split_whitespace().collect();
            let want = if pattern { 2 } else { 3 };
            if tok.len() < want {
                return Err(bad(format!("short entry line `{line}`")));
            }
            let i: usize = tok[0].parse().map_err(|_| bad(format!("bad row index in `{line}`")))?;
            let j: usize = tok[1].parse().map_err(|_| bad(format!("bad column index in `{line}`")))?;
            if i == 0 || j == 0 || i > nr || j > nc {
                return Err(bad(format!("index ({i}, {j}) outside {nr}×{nc}")));
            }
            let v = if pattern { 1.0 } else { num(tok[2])? };
            trips.push((i - 1, j - 1, v));
            if i != j {
                match sym {
                    Symmetry::Symmetric => trips.push((j - 1, i - 1, v)),
                    Symmetry::Skew => trips.push((j - 1, i - 1, -v)),
                    Symmetry::General => {}
                }
            }
            count += 1;
        }
        if count != nnz {
            return Err(bad(format!("expected {nnz} entries, found {count}")));
        }
        Ok(RealMatrix::from_sparse(SparseMatrix::from_triplets(nr, nc, trips)?))
    } else {
        let [nr, nc] = sizes[..] else { return Err(bad("array size line needs 2 entries")) };
        let vals: Vec<f64> = body.flat_map(str::split_whitespace).map(num).collect::<Result<_>>()?;
        let mut m = DMatrix::zeros(nr, nc);
        if sym == Symmetry::General {
            if vals.len() != nr * nc {
                return Err(bad(format!("expected {} values, found {}", nr * nc, vals.len())));
            }
            m.copy_from_slice(&vals);
        } else {
            let mut it = vals.into_iter();
            let sign = if sym == Symmetry::Skew { -1.0 } else { 1.0 };
            for j in 0..nc {
                let start = if sym == Symmetry::Skew { j + 1 } else { j };
                for i in start..nr {
                    let v = it.next().ok_or_else(|| bad("too few values"))?;
                    m[(i, j)] = v;
                    m[(j, i)] = sign * v;
                }
            }
        }
        Ok(RealMatrix::from_dense(m))
    }
}

pub fn read(path: &Path) -> Result<RealMatrix> {
    let text = fs::read_to_string(path)?;
    parse(&text).map_err(|e| match e {
        MorError::MatrixMarket(msg) => MorError::MatrixMarket(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_sparse(path: &Path) -> Result<SparseMatrix> {
    Ok(read(path)?.to_sparse())
}

/// Coordinate format for sparse storage, array format for dense.
/// Values use the shortest round-trip representation.
pub fn write_to<W: Write>(m: &RealMatrix, out: &mut W) -> Result<()> {
    match m {
        RealMatrix::Sparse(sp) => write_sparse_to(sp, out),
        RealMatrix::Dense(d) => {
            writeln!(out, "%%MatrixMarket matrix array real general")?;
            writeln!(out, "{} {}", d.nrows(), d.ncols())?;
            for v in d.iter() {
                writeln!(out, "{v:e}")?;
            }
            Ok(())
        }
    }
}

pub fn write_sparse_to<W: Write>(sp: &SparseMatrix, out: &mut W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", sp.nrows(), sp.ncols(), sp.nnz())?;
    for (i, j, v) in sp.iter() {
        writeln!(out, "{} {} {v:e}", i + 1, j + 1)?;
    }
    Ok(())
}

pub fn write(path: &Path, m: &RealMatrix) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_to(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_sparse(path: &Path, sp: &SparseMatrix) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_sparse_to(sp, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dense(path: &Path, d: &DMatrix<f64>) -> Result<()> {
    write(path, &RealMatrix::Dense(d.clone()))
}
