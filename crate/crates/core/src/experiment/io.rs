use std::path::Path;

use nalgebra::DMatrix;

use crate::dictionary::GramMatrix;
use crate::error::{Error, Result};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Gram file: first line `K`, then `K` rows of `K` whitespace-separated reals.
/// Blank lines and `#` comments are skipped.
pub fn parse_gram(text: &str) -> Result<GramMatrix> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("gram file is empty".into()))?;
    let k: usize = header
        .parse()
        .map_err(|_| Error::Parse(format!("first line must be the dimension K, got '{header}'")))?;
    if k == 0 {
        return Err(Error::Parse("K must be positive".into()));
    }
    let mut mat = DMatrix::zeros(k, k);
    for i in 0..k {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("expected {k} rows, found {i}")))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: cannot parse '{t}'", i + 1))))
            .collect::<Result<_>>()?;
        if row.len() != k {
            return Err(Error::Parse(format!("row {} has {} entries, expected {k}", i + 1, row.len())));
        }
        for (j, v) in row.into_iter().enumerate() {
            mat[(i, j)] = v;
        }
    }
    if lines.next().is_some() {
        return Err(Error::Parse(format!("trailing data after {k} rows")));
    }
    GramMatrix::new(mat)
}

pub fn read_gram_file(path: &Path) -> Result<GramMatrix> {
    parse_gram(&read(path)?)
}

/// Renders a Gram matrix in the file format accepted by [`parse_gram`].
pub fn format_gram(g: &GramMatrix) -> String {
    let mut out = format!("{}\n", g.k());
    for i in 0..g.k() {
        let row: Vec<String> = (0..g.k()).map(|j| format!("{:e}", g.matrix()[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Reals separated by whitespace or commas.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c.is_whitespace() || c == ','))
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("cannot parse '{t}' as a real"))))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(Error::Parse("vector is empty".into()));
    }
    Ok(v)
}

pub fn read_vector_file(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&read(path)?)
}

/// `%.12g`: 12 significant digits, trailing zeros removed.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.11e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v))
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}
