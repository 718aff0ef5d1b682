//! Cheap two-sided bounds on the dual norms.
//!
//! Both bounds only depend on `|z|` sorted in descending order: the upper
//! bound is the ℓ2 norm of the `k` largest entries, and the lower bound
//! maximizes `‖z[T]‖₁ / hb(m, |T|, ·)` over prefix sets `T`, which is optimal
//! because `hb` depends on `T` only through `|T|`.

use super::hypergeom::hb;
use super::GroupNormParam;
use crate::combinatorics::pbinom;
use crate::error::Result;

/// `|z|` sorted descending.
pub(crate) fn sorted_abs_desc(z: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = z.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    a
}

/// `⌈p(m-1)+1⌉`, guarded against round-off just above an integer.
pub(crate) fn bernoulli_upper_k(m: usize, p: f64) -> usize {
    let x = p * (m as f64 - 1.0) + 1.0;
    ((x - 1e-12).ceil() as usize).clamp(1, m)
}

/// `max_{T} ‖z[T]‖₁ / hb(m, |T|, a)` with the `0/0 = 0` convention.
pub(crate) fn max_prefix_ratio(sorted: &[f64], a: f64) -> Result<f64> {
    let m = sorted.len();
    let mut prefix = 0.0;
    let mut best = 0.0f64;
    for d in 1..=m {
        prefix += sorted[d - 1];
        let den = hb(m, d, a)?;
        if den > 0.0 {
            best = best.max(prefix / den);
        }
    }
    Ok(best)
}

/// Lower and upper bounds `(lower, upper)` on `|||z|||*` for the given norm.
pub fn dual_norm_bounds(z: &[f64], param: GroupNormParam) -> Result<(f64, f64)> {
    let m = z.len();
    param.validate(m)?;
    let sorted = sorted_abs_desc(z);
    let (lower, k) = match param {
        GroupNormParam::Subset(s) => {
            (s as f64 / m as f64 * max_prefix_ratio(&sorted, s as f64)?, s)
        }
        GroupNormParam::Bernoulli(p) => {
            (p * max_prefix_ratio(&sorted, p * m as f64)?, bernoulli_upper_k(m, p))
        }
    };
    let upper = sorted[..k].iter().map(|x| x * x).sum::<f64>().sqrt();
    // Both are valid bounds; equality cases can differ by one ulp.
    Ok((lower.min(upper), upper))
}

/// The weaker closed-form lower bound
/// `max(‖z‖∞, √(s/m) · max_T ‖z[T]‖₁/√|T|)` (with `p` in place of `s/m`).
pub fn dual_norm_coarse_lower(z: &[f64], param: GroupNormParam) -> Result<f64> {
    let m = z.len();
    param.validate(m)?;
    let sorted = sorted_abs_desc(z);
    let frac = match param {
        GroupNormParam::Subset(s) => s as f64 / m as f64,
        GroupNormParam::Bernoulli(p) => p,
    };
    let mut prefix = 0.0;
    let mut best = 0.0f64;
    for (i, v) in sorted.iter().enumerate() {
        prefix += v;
        best = best.max(prefix / ((i + 1) as f64).sqrt());
    }
    Ok(sorted[0].max(frac.sqrt() * best))
}

/// Dual-norm values that are known in closed form, if `z` or `param` falls
/// into one of those cases:
///
/// * `k = 1` gives `‖z‖∞`, `k = m` gives `‖z‖₂`;
/// * at most one nonzero entry gives `‖z‖∞` for every member of the family;
/// * constant `|z|` gives `√s|z|`, or `mp (Σ_{k=0}^{m} pbinom(k;m,p)√k)⁻¹ |z|`.
pub fn dual_norm_closed_form_edges(z: &[f64], param: GroupNormParam) -> Option<f64> {
    let m = z.len();
    if param.validate(m).is_err() {
        return None;
    }
    let sorted = sorted_abs_desc(z);
    let linf = sorted[0];
    let l2 = sorted.iter().map(|x| x * x).sum::<f64>().sqrt();
    if m == 1 || sorted[1] == 0.0 {
        return Some(linf);
    }
    match param {
        GroupNormParam::Subset(1) => return Some(linf),
        GroupNormParam::Subset(s) if s == m => return Some(l2),
        _ => {}
    }
    let smallest = sorted[m - 1];
    if linf - smallest <= 1e-14 * linf {
        let c = linf;
        return Some(match param {
            GroupNormParam::Subset(s) => (s as f64).sqrt() * c,
            GroupNormParam::Bernoulli(p) => {
                let mean_sqrt: f64 = (0..=m).map(|k| pbinom(k, m, p) * (k as f64).sqrt()).sum();
                m as f64 * p / mean_sqrt * c
            }
        });
    }
    None
}
