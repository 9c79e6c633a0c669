//! Matrix Market coordinate files, SNAP-style edge lists and plain-text
//! column blocks.

use super::{OperatorError, SparseSym};
use crate::smallmat::Mat;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> OperatorError {
    OperatorError::Parse {
        location: location.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Pattern,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Parses a Matrix Market coordinate matrix.
///
/// `symmetric` files store one triangle and are mirrored. `general` files are
/// symmetrised as `(A + Aᵀ) / 2`. `source` labels error locations.
pub fn parse_matrix_market(text: &str, source: &str) -> Result<SparseSym, OperatorError> {
    let mut lines = text.lines().enumerate();
    let (_, banner) = lines.next().ok_or_else(|| parse_err(format!("{source}:1"), "empty file"))?;
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(format!("{source}:1"), "missing %%MatrixMarket matrix banner"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(format!("{source}:1"), format!("unsupported format '{}'", tokens[2])));
    }
    let field = match tokens[3].as_str() {
        "real" | "integer" => Field::Real,
        "pattern" => Field::Pattern,
        other => return Err(parse_err(format!("{source}:1"), format!("unsupported field '{other}'"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => {
            return Err(parse_err(format!("{source}:1"), format!("unsupported symmetry '{other}'")))
        }
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_err(format!("{source}:EOF"), "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(format!("{source}:{}", size_line + 1), format!("bad size line: {e}")))?;
    if dims.len() != 3 {
        return Err(parse_err(format!("{source}:{}", size_line + 1), "size line needs rows cols nnz"));
    }
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    if rows != cols {
        return Err(OperatorError::NonSquare { rows, cols });
    }

    let mut triplets = Vec::with_capacity(2 * nnz);
    let mut count = 0usize;
    for (idx, line) in body {
        let location = format!("{source}:{}", idx + 1);
        let mut parts = line.split_whitespace();
        let mut index = |what: &str| -> Result<usize, OperatorError> {
            let tok = parts.next().ok_or_else(|| parse_err(&location, format!("missing {what} index")))?;
            let k: usize = tok
                .parse()
                .map_err(|_| parse_err(&location, format!("bad {what} index '{tok}'")))?;
            if k == 0 || k > rows {
                return Err(parse_err(&location, format!("{what} index {k} out of range 1..={rows}")));
            }
            Ok(k - 1)
        };
        let i = index("row")?;
        let j = index("column")?;
        let v = match field {
            Field::Pattern => 1.0,
            Field::Real => {
                let tok = parts.next().ok_or_else(|| parse_err(&location, "missing value"))?;
                tok.parse::<f64>()
                    .map_err(|_| parse_err(&location, format!("bad value '{tok}'")))?
            }
        };
        match symmetry {
            Symmetry::Symmetric => {
                triplets.push((i, j, v));
                if i != j {
                    triplets.push((j, i, v));
                }
            }
            Symmetry::General => {
                triplets.push((i, j, 0.5 * v));
                triplets.push((j, i, 0.5 * v));
            }
        }
        count += 1;
    }
    if count != nnz {
        return Err(parse_err(
            format!("{source}:EOF"),
            format!("expected {nnz} entries, found {count}"),
        ));
    }
    SparseSym::from_triplets(rows, triplets)
}

pub fn load_matrix_market(path: &Path) -> Result<SparseSym, OperatorError> {
    let text = fs::read_to_string(path)?;
    parse_matrix_market(&text, &path.display().to_string())
}

/// Writes the lower triangle in `symmetric` coordinate format with 17
/// significant digits, which reads back bit-exactly.
pub fn write_matrix_market(path: &Path, a: &SparseSym) -> Result<(), OperatorError> {
    let lower: Vec<(usize, usize, f64)> = a.triplets().filter(|(i, j, _)| j <= i).collect();
    let mut out = String::with_capacity(32 * lower.len() + 64);
    out.push_str("%%MatrixMarket matrix coordinate real symmetric\n");
    let _ = writeln!(out, "{} {} {}", a.n(), a.n(), lower.len());
    for (i, j, v) in lower {
        let _ = writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parses whitespace-separated `u v` pairs, skipping `#` and `%` comments.
///
/// Indices are taken as 1-based when the smallest index in the file is at
/// least 1, and 0-based otherwise. Extra columns (weights, timestamps) are
/// ignored.
pub fn parse_edge_list(text: &str, source: &str) -> Result<Vec<(usize, usize)>, OperatorError> {
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        let location = format!("{source}:{}", idx + 1);
        let mut parts = t.split_whitespace();
        let mut vertex = || -> Result<usize, OperatorError> {
            let tok = parts.next().ok_or_else(|| parse_err(&location, "expected two vertex ids"))?;
            tok.parse()
                .map_err(|_| parse_err(&location, format!("bad vertex id '{tok}'")))
        };
        let u = vertex()?;
        let v = vertex()?;
        edges.push((u, v));
    }
    let base = edges.iter().flat_map(|&(u, v)| [u, v]).min().unwrap_or(0).min(1);
    Ok(edges.into_iter().map(|(u, v)| (u - base, v - base)).collect())
}

pub fn load_edge_list(path: &Path) -> Result<Vec<(usize, usize)>, OperatorError> {
    let text = fs::read_to_string(path)?;
    parse_edge_list(&text, &path.display().to_string())
}

/// Reads a plain-text block: one row per line, columns separated by
/// whitespace, `#` comments.
pub fn load_block(path: &Path) -> Result<Mat, OperatorError> {
    let text = fs::read_to_string(path)?;
    let source = path.display().to_string();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let location = format!("{source}:{}", idx + 1);
        let row: Vec<f64> = t
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|_| parse_err(&location, format!("bad value '{tok}'"))))
            .collect::<Result<_, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    &location,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let p = rows.first().map_or(0, Vec::len);
    Ok(Mat::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

pub fn write_block(path: &Path, b: &Mat) -> Result<(), OperatorError> {
    let mut out = String::with_capacity(24 * b.len() + 16);
    for i in 0..b.nrows() {
        let line: Vec<String> = b.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
