//! Shared column-support text format.
//!
//! First line: `nrows ncols`. Then one line per column listing the 0-based
//! row indices of its ones, space separated and strictly increasing. An
//! all-zero column is an empty line.

use super::GF2Matrix;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub fn write_matrix<W: Write>(w: &mut W, m: &GF2Matrix) -> Result<(), FormatError> {
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for j in 0..m.ncols() {
        let sup = m.column_support(j);
        let line: Vec<String> = sup.iter().map(|i| i.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_matrix<R: BufRead>(r: &mut R) -> Result<GF2Matrix, FormatError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| FormatError::Parse {
            line: 1,
            msg: "missing header".into(),
        })??;
    let mut parts = header.split_whitespace();
    let parse_count = |s: Option<&str>, line: usize| -> Result<usize, FormatError> {
        s.ok_or_else(|| FormatError::Parse {
            line,
            msg: "expected `nrows ncols`".into(),
        })?
        .parse()
        .map_err(|e| FormatError::Parse {
            line,
            msg: format!("bad count: {e}"),
        })
    };
    let nrows = parse_count(parts.next(), 1)?;
    let ncols = parse_count(parts.next(), 1)?;

    let mut supports: Vec<Vec<usize>> = Vec::with_capacity(ncols);
    for j in 0..ncols {
        let lineno = j + 2;
        let line = lines
            .next()
            .ok_or_else(|| FormatError::Parse {
                line: lineno,
                msg: format!("expected {ncols} column lines, found {j}"),
            })??;
        let mut sup = Vec::new();
        for tok in line.split_whitespace() {
            let idx: usize = tok.parse().map_err(|e| FormatError::Parse {
                line: lineno,
                msg: format!("bad row index `{tok}`: {e}"),
            })?;
            if idx >= nrows {
                return Err(FormatError::Parse {
                    line: lineno,
                    msg: format!("row index {idx} out of range {nrows}"),
                });
            }
            if let Some(&last) = sup.last() {
                if idx <= last {
                    return Err(FormatError::Parse {
                        line: lineno,
                        msg: format!("row indices must be strictly increasing, got {last} then {idx}"),
                    });
                }
            }
            sup.push(idx);
        }
        supports.push(sup);
    }
    Ok(GF2Matrix::from_column_supports(nrows, &supports))
}
