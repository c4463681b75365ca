//! Plain-text density-matrix files.
//!
//! Format: a header line `qubits=<n>`, then `2^n` rows of `2^n`
//! whitespace-separated complex entries written as `re+imj` (for example
//! `0.5+0j` or `0.25-0.1j`), row-major. Blank lines are ignored. Loaded
//! matrices get alphabetic subsystem labels and full validation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::qcore::{C64, CMatrix, DensityMatrix, SubsystemLayout, MAX_QUBITS};

pub fn load_density(path: impl AsRef<Path>) -> Result<DensityMatrix> {
    parse_density(&std::fs::read_to_string(path)?)
}

pub fn parse_density(text: &str) -> Result<DensityMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, 1, "empty file, expected `qubits=<n>` header"))?;
    let n: usize = header
        .trim()
        .strip_prefix("qubits=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(header_line, 1, "expected `qubits=<n>` header"))?;
    if n == 0 || n > MAX_QUBITS {
        return Err(parse_err(
            header_line,
            1,
            &format!("qubit count must be in 1..={MAX_QUBITS}, got {n}"),
        ));
    }

    let dim = 1usize << n;
    let mut mat = CMatrix::zeros(dim, dim);
    for row in 0..dim {
        let (line_no, line) = lines.next().ok_or_else(|| {
            parse_err(0, 1, &format!("expected {dim} matrix rows, found {row}"))
        })?;
        let mut col = 0usize;
        let mut offset = 0usize;
        for tok in line.split_whitespace() {
            let at = line[offset..].find(tok).unwrap() + offset;
            offset = at + tok.len();
            if col >= dim {
                return Err(parse_err(
                    line_no,
                    at + 1,
                    &format!("row has more than {dim} entries"),
                ));
            }
            mat[(row, col)] = parse_complex(tok).ok_or_else(|| {
                parse_err(line_no, at + 1, &format!("malformed complex entry `{tok}`"))
            })?;
            col += 1;
        }
        if col != dim {
            return Err(parse_err(
                line_no,
                1,
                &format!("expected {dim} entries in row, found {col}"),
            ));
        }
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(parse_err(line_no, 1, "unexpected content after matrix rows"));
    }

    DensityMatrix::new(SubsystemLayout::alphabetic(n)?, mat)
}

pub fn write_density(path: impl AsRef<Path>, rho: &DensityMatrix) -> Result<()> {
    std::fs::write(path, format_density(rho))?;
    Ok(())
}

pub fn format_density(rho: &DensityMatrix) -> String {
    let dim = rho.dim();
    let m = rho.matrix();
    let mut out = format!("qubits={}\n", rho.n_qubits());
    for r in 0..dim {
        let row: Vec<String> = (0..dim).map(|c| format_complex(m[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn format_complex(z: C64) -> String {
    if z.im.is_sign_negative() {
        format!("{}-{}j", z.re, -z.im)
    } else {
        format!("{}+{}j", z.re, z.im)
    }
}

/// Parse `re+imj` / `re-imj`, with exponents allowed in either part.
fn parse_complex(tok: &str) -> Option<C64> {
    let body = tok.strip_suffix('j')?;
    let bytes = body.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        let c = bytes[i] as char;
        if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
            split = Some(i);
            break;
        }
    }
    let i = split?;
    let re: f64 = body[..i].parse().ok()?;
    let im: f64 = body[i..].parse().ok()?;
    Some(C64::new(re, im))
}

fn parse_err(line: usize, col: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        col,
        msg: msg.to_string(),
    }
}
