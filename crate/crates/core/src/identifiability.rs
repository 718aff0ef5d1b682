//! Population local-identifiability verdicts.
//!
//! `D0` is locally identifiable for `SG(s)` (`s < K`) when
//! `max_j |||M0[-j,j]|||*_s < 1 − (s−1)/(K−1)`, and for `BG(p)` (`p < 1`) when
//! `max_j |||M0[-j,j]|||*_p < 1 − p`; the reverse strict inequalities imply
//! non-identifiability, and the non-sparse models `s = K`, `p = 1` are never
//! identifiable. The dual norms are evaluated exactly ([`Method::ExactDual`])
//! or replaced by their cheap upper/lower bounds ([`Method::Bounds`]), which
//! gives a sufficient and a necessary condition respectively.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::combinatorics::{binomial, subset_norm_sums};
use crate::dictionary::GramMatrix;
use crate::error::{invalid, Error, Result};
use crate::models::SparsityModel;
use crate::norms::bounds::{bernoulli_upper_k, max_prefix_ratio, sorted_abs_desc};
use crate::norms::{dual_norm_exact_with, DualCertificate, GroupNormParam, SolverOptions};

/// Half-width of the band around the threshold where no verdict is issued.
pub const INDETERMINATE_BAND: f64 = 1e-9;
/// Tangency tolerance for directional derivatives.
pub const TANGENT_TOL: f64 = 1e-8;
/// Largest `K` for which directional derivatives enumerate subsets.
pub const DERIVATIVE_CAP: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Identifiable,
    NotIdentifiable,
    Indeterminate,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Identifiable => "identifiable",
            Status::NotIdentifiable => "not_identifiable",
            Status::Indeterminate => "indeterminate",
        })
    }
}

/// Which condition produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    ExactDual,
    SufficientBound,
    NecessaryBound,
    DegenerateNonSparse,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Condition::ExactDual => "exact_dual",
            Condition::SufficientBound => "sufficient_bound",
            Condition::NecessaryBound => "necessary_bound",
            Condition::DegenerateNonSparse => "degenerate_non_sparse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ExactDual,
    Bounds,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" | "exact_dual" => Ok(Method::ExactDual),
            "bounds" => Ok(Method::Bounds),
            other => Err(Error::Parse(format!("method must be exact or bounds, got '{other}'"))),
        }
    }
}

/// One-sided derivative direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: Status,
    /// `max_j` dual norm (or the bound standing in for it).
    pub lhs: f64,
    /// `1 − (s−1)/(K−1)` or `1 − p`.
    pub rhs: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    pub condition: Condition,
    /// Certified bracket `[lo, hi]` on the exact left-hand side.
    pub lhs_bracket: (f64, f64),
    /// Column attaining the maximum.
    pub column: usize,
}

/// `max_j max_{|S|=k, j∉S} ‖M0[S,j]‖₂`.
pub fn cumulative_coherence(m0: &GramMatrix, k: usize) -> Result<f64> {
    let kk = m0.k();
    if k == 0 || k + 1 > kk {
        return invalid(format!("cumulative coherence order k={k} out of [1, {}]", kk.saturating_sub(1)));
    }
    Ok((0..kk)
        .map(|j| {
            let sorted = sorted_abs_desc(&m0.column_without_diagonal(j));
            sorted[..k].iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max))
}

/// `max_j max_{S∌j} ‖M0[S,j]‖₁ / hb(K−1, |S|, a)`.
pub fn lower_functional(m0: &GramMatrix, a: f64) -> Result<f64> {
    let kk = m0.k();
    if kk < 2 || !(a > 0.0 && a <= (kk - 1) as f64) {
        return invalid(format!("lower functional argument a={a} out of (0, {}]", kk.saturating_sub(1)));
    }
    let mut best = 0.0f64;
    for j in 0..kk {
        let sorted = sorted_abs_desc(&m0.column_without_diagonal(j));
        best = best.max(max_prefix_ratio(&sorted, a)?);
    }
    Ok(best)
}

/// `(norm parameter on R^{K−1}, threshold)` for a sparse model.
fn norm_and_threshold(k: usize, model: SparsityModel) -> (GroupNormParam, f64) {
    match model {
        SparsityModel::SG(s) => (GroupNormParam::Subset(s), 1.0 - (s as f64 - 1.0) / (k as f64 - 1.0)),
        SparsityModel::BG(p) => (GroupNormParam::Bernoulli(p), 1.0 - p),
    }
}

/// Theorem-level threshold `1 − (s−1)/(K−1)` or `1 − p` (zero for non-sparse models).
pub fn threshold(k: usize, model: SparsityModel) -> f64 {
    match model {
        SparsityModel::SG(s) => 1.0 - (s as f64 - 1.0) / (k as f64 - 1.0),
        SparsityModel::BG(p) => 1.0 - p,
    }
}

fn check_model(m0: &GramMatrix, model: SparsityModel) -> Result<()> {
    if m0.k() < 2 {
        return invalid("identifiability needs K >= 2");
    }
    model.validate(m0.k())
}

/// Exact dual norm of every column `M0[-j,j]`, each with its certificate.
/// Identical columns are solved once.
pub fn column_duals(m0: &GramMatrix, param: GroupNormParam, opts: &SolverOptions) -> Result<Vec<DualCertificate>> {
    let mut cache: HashMap<Vec<u64>, DualCertificate> = HashMap::new();
    let mut out = Vec::with_capacity(m0.k());
    for j in 0..m0.k() {
        let z = m0.column_without_diagonal(j);
        let key: Vec<u64> = z.iter().map(|v| v.to_bits()).collect();
        let cert = match cache.get(&key) {
            Some(c) => c.clone(),
            None => {
                let c = dual_norm_exact_with(&z, param, opts)?;
                cache.insert(key, c.clone());
                c
            }
        };
        out.push(cert);
    }
    Ok(out)
}

fn degenerate_verdict(m0: &GramMatrix) -> Verdict {
    let (column, lhs) = (0..m0.k())
        .map(|j| (j, m0.column_without_diagonal(j).iter().map(|v| v * v).sum::<f64>().sqrt()))
        .fold((0, 0.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
    Verdict {
        status: Status::NotIdentifiable,
        lhs,
        rhs: 0.0,
        margin: -lhs,
        condition: Condition::DegenerateNonSparse,
        lhs_bracket: (lhs, lhs),
        column,
    }
}

/// Population verdict with default solver options.
pub fn population_verdict(m0: &GramMatrix, model: SparsityModel, method: Method) -> Result<Verdict> {
    population_verdict_with(m0, model, method, &SolverOptions::default())
}

pub fn population_verdict_with(
    m0: &GramMatrix,
    model: SparsityModel,
    method: Method,
    opts: &SolverOptions,
) -> Result<Verdict> {
    check_model(m0, model)?;
    let k = m0.k();
    if model.is_non_sparse(k) {
        return Ok(degenerate_verdict(m0));
    }
    let (param, rhs) = norm_and_threshold(k, model);
    match method {
        Method::ExactDual => {
            let certs = column_duals(m0, param, opts)?;
            let (column, cert) = certs
                .iter()
                .enumerate()
                .fold((0, &certs[0]), |acc, (j, c)| if c.value > acc.1.value { (j, c) } else { acc });
            let lo = certs.iter().map(|c| c.lower).fold(0.0, f64::max);
            let hi = certs.iter().map(|c| c.upper).fold(0.0, f64::max);
            let lhs = cert.value;
            let margin = rhs - lhs;
            let band = INDETERMINATE_BAND.max(0.5 * (hi - lo));
            let status = if margin.abs() <= band {
                Status::Indeterminate
            } else if margin > 0.0 {
                Status::Identifiable
            } else {
                Status::NotIdentifiable
            };
            Ok(Verdict { status, lhs, rhs, margin, condition: Condition::ExactDual, lhs_bracket: (lo, hi), column })
        }
        Method::Bounds => {
            let (suff_k, nec_a, nec_scale) = match model {
                SparsityModel::SG(s) => (s, s as f64, s as f64 / (k as f64 - 1.0)),
                SparsityModel::BG(p) => (bernoulli_upper_k(k - 1, p), p * (k as f64 - 1.0), p),
            };
            let suff = cumulative_coherence(m0, suff_k)?;
            let nec = nec_scale * lower_functional(m0, nec_a)?;
            let bracket = (nec.min(suff), suff);
            let column = argmax_column(m0, suff_k);
            let verdict = |status, lhs: f64, condition| Verdict {
                status,
                lhs,
                rhs,
                margin: rhs - lhs,
                condition,
                lhs_bracket: bracket,
                column,
            };
            Ok(if suff < rhs {
                verdict(Status::Identifiable, suff, Condition::SufficientBound)
            } else if nec > rhs {
                verdict(Status::NotIdentifiable, nec, Condition::NecessaryBound)
            } else {
                verdict(Status::Indeterminate, suff, Condition::SufficientBound)
            })
        }
    }
}

fn argmax_column(m0: &GramMatrix, k: usize) -> usize {
    (0..m0.k())
        .map(|j| {
            let s = sorted_abs_desc(&m0.column_without_diagonal(j));
            (j, s[..k].iter().map(|v| v * v).sum::<f64>())
        })
        .fold((0, -1.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc })
        .0
}

/// Critical `μ` for the constant inner-product family `μ11ᵀ + (1−μ)I`.
pub fn phase_boundary_constant_mu(k: usize, model: SparsityModel) -> Result<f64> {
    if k < 2 {
        return invalid("phase boundary needs K >= 2");
    }
    let m = k - 1;
    match model {
        SparsityModel::SG(s) if s >= 1 && s <= m => Ok((1.0 - (s as f64 - 1.0) / m as f64) / (s as f64).sqrt()),
        SparsityModel::BG(p) if p > 0.0 && p < 1.0 => {
            let mean_sqrt: f64 = (0..=m)
                .map(|j| crate::combinatorics::pbinom(j, m, p) * (j as f64).sqrt())
                .sum();
            Ok((1.0 - p) / (p * m as f64) * mean_sqrt)
        }
        _ => invalid(format!("sparsity {model} out of range for a phase boundary with K={k}")),
    }
}

/// Bisection on the verdict margin along a one-parameter family `t ↦ M0(t)`.
///
/// The caller asserts the margin is monotone on `bracket` and changes sign
/// between its endpoints.
pub fn phase_boundary_general<F>(
    family: F,
    model: SparsityModel,
    method: Method,
    bracket: (f64, f64),
    tol: f64,
) -> Result<f64>
where
    F: Fn(f64) -> Result<GramMatrix>,
{
    let margin = |t: f64| -> Result<f64> { Ok(population_verdict(&family(t)?, model, method)?.margin) };
    let (mut lo, mut hi) = bracket;
    let mut m_lo = margin(lo)?;
    let m_hi = margin(hi)?;
    if m_lo == 0.0 {
        return Ok(lo);
    }
    if m_hi == 0.0 {
        return Ok(hi);
    }
    if m_lo.signum() == m_hi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        let m_mid = margin(mid)?;
        if m_mid == 0.0 {
            return Ok(mid);
        }
        if m_mid.signum() == m_lo.signum() {
            lo = mid;
            m_lo = m_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_tangent(m0: &GramMatrix, adot: &DMatrix<f64>) -> Result<()> {
    let k = m0.k();
    if adot.nrows() != k || adot.ncols() != k {
        return Err(Error::DimensionMismatch { expected: k, got: adot.nrows() });
    }
    for c in 0..k {
        let residual = m0.matrix().column(c).dot(&adot.column(c));
        if residual.abs() > TANGENT_TOL {
            return Err(Error::NotTangent { column: c, residual });
        }
    }
    Ok(())
}

/// Sets the diagonal of `raw` so that `M0[,k]ᵀ Ȧ[,k] = 0` for every column.
pub fn tangent_completion(m0: &GramMatrix, raw: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m0.k();
    let mut out = raw.clone();
    for c in 0..k {
        let s: f64 = (0..k).filter(|&i| i != c).map(|i| m0.matrix()[(i, c)] * raw[(i, c)]).sum();
        out[(c, c)] = -s;
    }
    out
}

/// Random tangent direction: Gaussian off-diagonal entries, diagonal completed.
pub fn random_tangent_direction<R: Rng>(m0: &GramMatrix, rng: &mut R) -> DMatrix<f64> {
    let k = m0.k();
    let raw = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { rng.sample(StandardNormal) });
    tangent_completion(m0, &raw)
}

/// One-sided derivative of the population objective along `D0·A_t` with
/// `Ȧ_0 = adot`, scaled by `√(π/2)·K/s` (SG) or `√(π/2)/p` (BG):
///
/// `Σ_j ( Σ_{i≠j} M0[i,j] Ȧ[j,i] ± ρ_j(Ȧ[j,−j]) )`
///
/// where `ρ_j` is `C(K−1,s−1)⁻¹ Σ_{|S|=s, j∉S} ‖Ȧ[j,S]‖₂` for `SG(s)` and
/// `(1−p) Σ_{k=0}^{K−2} p^k (1−p)^{K−2−k} Σ_{|S|=k+1, j∉S} ‖Ȧ[j,S]‖₂` for `BG(p)`.
pub fn directional_derivative(m0: &GramMatrix, model: SparsityModel, adot: &DMatrix<f64>, side: Side) -> Result<f64> {
    check_model(m0, model)?;
    let k = m0.k();
    if k > DERIVATIVE_CAP {
        return Err(Error::TooLarge { what: "directional derivative", m: k, cap: DERIVATIVE_CAP });
    }
    check_tangent(m0, adot)?;
    if adot.iter().all(|v| *v == 0.0) {
        return invalid("direction must be nonzero");
    }
    let mut collinearity = 0.0;
    let mut spread = 0.0;
    for j in 0..k {
        let row: Vec<f64> = (0..k).filter(|&i| i != j).map(|i| adot[(j, i)]).collect();
        collinearity += (0..k).filter(|&i| i != j).map(|i| m0.matrix()[(i, j)] * adot[(j, i)]).sum::<f64>();
        let sums = subset_norm_sums(&row);
        spread += match model {
            SparsityModel::SG(s) => sums.get(s).copied().unwrap_or(0.0) / binomial(k - 1, s - 1),
            SparsityModel::BG(p) => {
                (1.0 - p)
                    * (0..=k - 2)
                        .map(|i| p.powi(i as i32) * (1.0 - p).powi((k - 2 - i) as i32) * sums[i + 1])
                        .sum::<f64>()
            }
        };
    }
    Ok(match side {
        Side::Plus => collinearity + spread,
        Side::Minus => collinearity - spread,
    })
}

/// Converts the scaled derivative of [`directional_derivative`] back to the
/// derivative of the population objective itself.
pub fn derivative_scale(k: usize, model: SparsityModel) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    match model {
        SparsityModel::SG(s) => c * s as f64 / k as f64,
        SparsityModel::BG(p) => c * p,
    }
}

/// Tangent direction concentrated on the worst column `j*`, along the primal
/// witness `w` of its dual norm (`Ȧ[j*, −j*] = w`). When the dual exceeds the
/// threshold, `Δ⁻ > 0` along it.
pub fn most_violating_direction(m0: &GramMatrix, model: SparsityModel, opts: &SolverOptions) -> Result<DMatrix<f64>> {
    check_model(m0, model)?;
    let k = m0.k();
    if model.is_non_sparse(k) {
        // Any off-diagonal direction aligned with M0[-j,j] works.
        let v = degenerate_verdict(m0);
        let mut raw = DMatrix::zeros(k, k);
        for i in (0..k).filter(|&i| i != v.column) {
            raw[(v.column, i)] = m0.matrix()[(i, v.column)];
        }
        return Ok(tangent_completion(m0, &raw));
    }
    let (param, _) = norm_and_threshold(k, model);
    let mut best: Option<(usize, DualCertificate)> = None;
    for j in 0..k {
        let cert = dual_norm_exact_with(&m0.column_without_diagonal(j), param, opts)?;
        if best.as_ref().is_none_or(|(_, b)| cert.lower > b.lower) {
            best = Some((j, cert));
        }
    }
    let (j, cert) = best.expect("K >= 2");
    let mut raw = DMatrix::zeros(k, k);
    for (pos, i) in (0..k).filter(|&i| i != j).enumerate() {
        raw[(j, i)] = cert.primal_witness[pos];
    }
    Ok(tangent_completion(m0, &raw))
}
