use crate::combinatorics::hypergeom_pmf;
use crate::error::{invalid, Result};

/// `E√L` where `L` is hypergeometric: the number of ones among `k` draws
/// without replacement from `d` ones and `m - d` zeros.
pub fn hypergeom_sqrt_mean(m: usize, d: usize, k: usize) -> Result<f64> {
    if d > m || k > m {
        return invalid(format!("hypergeometric parameters out of range: m={m}, d={d}, k={k}"));
    }
    if d == m {
        return Ok((k as f64).sqrt());
    }
    let lo = (k + d).saturating_sub(m);
    let hi = k.min(d);
    Ok((lo.max(1)..=hi)
        .map(|l| hypergeom_pmf(l, m, d, k) * (l as f64).sqrt())
        .sum())
}

/// Piecewise-linear interpolation of `k ↦ E√L_m(d, k)` evaluated at real `a ∈ [0, m]`.
pub fn hb(m: usize, d: usize, a: f64) -> Result<f64> {
    if d > m {
        return invalid(format!("hb: d={d} exceeds m={m}"));
    }
    if !(a >= 0.0 && a <= m as f64) {
        return invalid(format!("hb: a={a} outside [0, {m}]"));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    let k = a.ceil() as usize;
    let upper = hypergeom_sqrt_mean(m, d, k)?;
    let lower = hypergeom_sqrt_mean(m, d, k - 1)?;
    Ok(lower + (upper - lower) * (a - (k - 1) as f64))
}
