//! Plain-text matrix format shared by every file the tools read and write.
//!
//! ```text
//! # optional comment lines
//! rows R cols C
//! v00 v01 ... v0C
//! ...
//! ```
//!
//! Values are row-major and whitespace separated. Numbers are written with the
//! shortest representation that parses back to the same `f64`, so a save/load
//! round trip is bit exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Serialize a matrix, optionally preceded by `# comment` lines.
pub fn format_matrix(m: &DMatrix<f64>, comments: &[String]) -> String {
    let mut out = String::with_capacity(m.len() * 20 + 32);
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(out, "rows {} cols {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

/// Parse the matrix format. `origin` is only used in error messages.
pub fn parse_matrix(text: &str, origin: &Path) -> Result<DMatrix<f64>> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines
        .next()
        .ok_or_else(|| perr(1, "empty file, expected header `rows R cols C`".into()))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let (rows, cols) = match toks.as_slice() {
        ["rows", r, "cols", c] => {
            let r = r
                .parse::<usize>()
                .map_err(|e| perr(hline, format!("bad row count {r:?}: {e}")))?;
            let c = c
                .parse::<usize>()
                .map_err(|e| perr(hline, format!("bad column count {c:?}: {e}")))?;
            (r, c)
        }
        _ => {
            return Err(perr(
                hline,
                format!("expected header `rows R cols C`, found {header:?}"),
            ))
        }
    };

    let mut values = Vec::with_capacity(rows * cols);
    for (lineno, line) in lines {
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|e| perr(lineno, format!("bad number {tok:?}: {e}")))?;
            values.push(v);
        }
    }
    if values.len() != rows * cols {
        return Err(Error::dim(format!(
            "{}: header declares {rows}x{cols} = {} values, found {}",
            origin.display(),
            rows * cols,
            values.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn save_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    save_matrix_with_comments(path, m, &[])
}

pub fn save_matrix_with_comments(
    path: impl AsRef<Path>,
    m: &DMatrix<f64>,
    comments: &[String],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix(m, comments)).map_err(|e| Error::io(path, e))
}
