//! Line-oriented table formats.
//!
//! Cube functions: a header `n d`, then `2^n` lines of `d` reals, line `x`
//! holding the value at bitmask `x`. Poisson functions: a header `m K d`, then
//! `K^m` lines, line `Σ_i x_i K^i` holding the value at `x`. Blank lines and
//! lines starting with `#` are skipped.
//!
//! An embedding manifest lists one entry per line as `path q p T a1,a2,…`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cube::CubeFunction;
use crate::error::{Error, Result};
use crate::norm::NormSpec;
use crate::poisson::PoissonFunction;

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

fn parse_fields<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>> {
    text.split_whitespace()
        .map(|tok| tok.parse::<T>().map_err(|_| parse_err(line, format!("cannot parse `{tok}`"))))
        .collect()
}

/// Reads `rows` lines of `d` reals each.
fn read_rows<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, rows: usize, d: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(rows * d);
    for r in 0..rows {
        let (line, text) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("expected {rows} rows, found {r}")))?;
        let row: Vec<f64> = parse_fields(line, text)?;
        if row.len() != d {
            return Err(parse_err(line, format!("expected {d} values, found {}", row.len())));
        }
        values.extend(row);
    }
    if let Some((line, _)) = lines.next() {
        return Err(parse_err(line, "trailing data after the last row"));
    }
    Ok(values)
}

pub fn parse_cube_function(text: &str) -> Result<CubeFunction> {
    let mut lines = content_lines(text);
    let (line, header) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
    let h: Vec<usize> = parse_fields(line, header)?;
    let [n, d] = h[..] else {
        return Err(parse_err(line, "header must be `n d`"));
    };
    crate::cube::check_table_dim("parse_cube_function", n, crate::cube::MAX_TABLE_DIM)?;
    let values = read_rows(&mut lines, 1 << n, d)?;
    CubeFunction::from_values(n, d, values)
}

fn write_rows(out: &mut String, values: &[f64], d: usize) {
    for row in values.chunks(d) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{v}").expect("writing to a String");
        }
        out.push('\n');
    }
}

pub fn format_cube_function(f: &CubeFunction) -> String {
    let mut out = format!("{} {}\n", f.dim_n(), f.dim_d());
    write_rows(&mut out, f.values(), f.dim_d());
    out
}

pub fn parse_poisson_function(text: &str) -> Result<PoissonFunction> {
    let mut lines = content_lines(text);
    let (line, header) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
    let h: Vec<usize> = parse_fields(line, header)?;
    let [m, k, d] = h[..] else {
        return Err(parse_err(line, "header must be `m K d`"));
    };
    let rows = (k as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if rows > crate::poisson::MAX_POISSON_TABLE as u128 || k < 2 || m == 0 {
        // let the constructor produce the precise error
        return PoissonFunction::from_values(m, k, d.max(1), Vec::new());
    }
    let values = read_rows(&mut lines, rows as usize, d)?;
    PoissonFunction::from_values(m, k, d, values)
}

pub fn format_poisson_function(f: &PoissonFunction) -> String {
    let mut out = format!("{} {} {}\n", f.dim_m(), f.cutoff(), f.dim_d());
    write_rows(&mut out, f.values(), f.dim_d());
    out
}

pub fn read_cube_function(path: &Path) -> Result<CubeFunction> {
    parse_cube_function(&std::fs::read_to_string(path)?)
}

pub fn write_cube_function(path: &Path, f: &CubeFunction) -> Result<()> {
    Ok(std::fs::write(path, format_cube_function(f))?)
}

pub fn read_poisson_function(path: &Path) -> Result<PoissonFunction> {
    parse_poisson_function(&std::fs::read_to_string(path)?)
}

pub fn write_poisson_function(path: &Path, f: &PoissonFunction) -> Result<()> {
    Ok(std::fs::write(path, format_poisson_function(f))?)
}

/// One embedding to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub norm: NormSpec,
    pub alphas: Vec<f64>,
}

/// Parses a manifest; relative paths are resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    content_lines(text)
        .map(|(line, l)| {
            let fields: Vec<&str> = l.split_whitespace().collect();
            let [path, q, p, t, alphas] = fields[..] else {
                return Err(parse_err(line, "expected `path q p T a1,a2,...`"));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(line, format!("cannot parse `{s}`")));
            let norm = NormSpec::new(num(q)?, num(p)?, num(t)?)?;
            let alphas = alphas.split(',').map(num).collect::<Result<Vec<_>>>()?;
            let path = Path::new(path);
            Ok(ManifestEntry {
                path: if path.is_absolute() { path.to_path_buf() } else { base.join(path) },
                norm,
                alphas,
            })
        })
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&std::fs::read_to_string(path)?, base)
}
