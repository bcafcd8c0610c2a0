//! Plain-text cubature formula files.
//!
//! ```text
//! # comments and blank lines are ignored
//! d m N
//! path <weight> <breakpoints>
//! <s> <x_1> … <x_d>        one line per breakpoint, first one `0 0 … 0`
//! …
//! ```
//!
//! `d` is the driving dimension, `m` the claimed degree and `N` the number
//! of paths. Paths live on `[0, 1]`. Loading never certifies; run
//! [`moving_frame_core::schemes::verify_cubature`] on the result.

use std::fmt::Write as _;

use moving_frame_core::schemes::{CubatureFormula, PiecewiseLinearPath};

use crate::CliError;

pub fn parse_formula(text: &str) -> Result<CubatureFormula, CliError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let bad = |line: usize, msg: &str| CliError::Validation(format!("cubature file line {line}: {msg}"));
    let (line, header) = lines.next().ok_or_else(|| bad(0, "empty file"))?;
    let header = numbers::<usize>(header).map_err(|m| bad(line, &m))?;
    let [d, m, n] = header[..] else {
        return Err(bad(line, "header must be `d m N`"));
    };
    if d == 0 || n == 0 {
        return Err(bad(line, "dimension and path count must be positive"));
    }
    let mut paths = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, head) = lines.next().ok_or_else(|| bad(0, "fewer paths than declared"))?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some("path") {
            return Err(bad(line, "expected `path <weight> <breakpoints>`"));
        }
        let weight: f64 = parts
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| bad(line, "missing weight"))?;
        let k: usize = parts
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| bad(line, "missing breakpoint count"))?;
        if parts.next().is_some() {
            return Err(bad(line, "trailing tokens"));
        }
        let mut times = Vec::with_capacity(k);
        let mut points = Vec::with_capacity(k);
        for _ in 0..k {
            let (line, row) = lines.next().ok_or_else(|| bad(0, "fewer breakpoints than declared"))?;
            let row = numbers::<f64>(row).map_err(|m| bad(line, &m))?;
            if row.len() != d + 1 {
                return Err(bad(line, &format!("expected {} numbers", d + 1)));
            }
            times.push(row[0]);
            points.push(row[1..].to_vec());
        }
        paths.push(PiecewiseLinearPath::new(times, points)?);
        weights.push(weight);
    }
    if let Some((line, _)) = lines.next() {
        return Err(bad(line, "more content than declared paths"));
    }
    Ok(CubatureFormula::new(m, paths, weights)?)
}

fn numbers<T: std::str::FromStr>(line: &str) -> Result<Vec<T>, String> {
    line.split_whitespace()
        .map(|t| t.parse::<T>().map_err(|_| format!("cannot parse `{t}`")))
        .collect()
}

/// Writes floats in shortest round-trip form, so `parse(write(f)) == f`.
pub fn write_formula(f: &CubatureFormula, comment: &str) -> String {
    let mut out = String::new();
    for l in comment.lines() {
        let _ = writeln!(out, "# {l}");
    }
    let _ = writeln!(out, "{} {} {}", f.dim(), f.degree(), f.len());
    for (p, w) in f.paths().iter().zip(f.weights()) {
        let _ = writeln!(out, "path {w:?} {}", p.times().len());
        for (t, x) in p.times().iter().zip(p.points()) {
            let _ = write!(out, "{t:?}");
            for v in x {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
    }
    out
}
