//! Finite-sample probability bounds.
//!
//! With `N` samples and margin `√(π/2)·ε` around the population threshold,
//! `D0` is (or is not) a local minimum of the empirical objective with
//! probability at least `1 − c·(P1 + P2 + P3)`, where `c = K²` on the
//! sufficient side and `c = K` on the necessary side.
//!
//! ```text
//! P1(ε, N; μ, K) = 2 exp(−Nε² / (108 K μ))
//! P2(ε, N; p, K) = 2 exp(−pNε² / (18 p² K + 9 √(2pK)))
//! P3(ε, N; p, K) = 3 (24/(εp) + 1)^K exp(−pNε² / 360)
//! ```
//!
//! `SG(s)` uses `p = s/K`. `BG(p)` uses `K_p = K + 2/p` inside `P1` and `P2`
//! and plain `K` inside `P3`.

use crate::dictionary::GramMatrix;
use crate::error::{invalid, Error, Result};
use crate::identifiability::{cumulative_coherence, population_verdict_with, Method, Verdict};
use crate::models::SparsityModel;
use crate::norms::dual::{BERNOULLI_EXACT_CAP, SUBSET_EXACT_CAP};
use crate::norms::SolverOptions;

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginSide {
    SufficientHolds,
    NecessaryHolds,
    NeitherMarginMet,
}

impl std::fmt::Display for MarginSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MarginSide::SufficientHolds => "sufficient_holds",
            MarginSide::NecessaryHolds => "necessary_holds",
            MarginSide::NeitherMarginMet => "neither_margin_met",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSampleReport {
    pub verdict: Verdict,
    pub epsilon: f64,
    pub n: u64,
    /// Lower bound on the probability that the claimed side holds, in `[0, 1]`.
    /// Always 0 for [`MarginSide::NeitherMarginMet`].
    pub prob_lower_bound: f64,
    pub side: MarginSide,
    /// The raw bound was `≤ 0` and got clamped.
    pub vacuous: bool,
}

fn check_common(eps: f64, n: u64, k: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 0.5) {
        return invalid(format!("eps={eps} out of (0, 1/2]"));
    }
    if n == 0 {
        return invalid("N must be at least 1");
    }
    if !(k >= 2.0) || !k.is_finite() {
        return invalid(format!("K={k} must be at least 2"));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return invalid(format!("p={p} out of (0, 1]"));
    }
    Ok(())
}

/// `ln P1`; `−∞` when `mu = 0`.
pub fn ln_p1(eps: f64, n: u64, mu: f64, k: f64) -> Result<f64> {
    check_common(eps, n, k)?;
    if !(mu >= 0.0) || !mu.is_finite() {
        return invalid(format!("mu={mu} must be nonnegative"));
    }
    if mu == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(LN2 - n as f64 * eps * eps / (108.0 * k * mu))
}

pub fn ln_p2(eps: f64, n: u64, p: f64, k: f64) -> Result<f64> {
    check_common(eps, n, k)?;
    check_p(p)?;
    Ok(LN2 - p * n as f64 * eps * eps / (18.0 * p * p * k + 9.0 * (2.0 * p * k).sqrt()))
}

pub fn ln_p3(eps: f64, n: u64, p: f64, k: f64) -> Result<f64> {
    check_common(eps, n, k)?;
    check_p(p)?;
    Ok(3f64.ln() + k * (24.0 / (eps * p) + 1.0).ln() - p * n as f64 * eps * eps / 360.0)
}

pub fn p1(eps: f64, n: u64, mu: f64, k: f64) -> Result<f64> {
    ln_p1(eps, n, mu, k).map(f64::exp)
}

pub fn p2(eps: f64, n: u64, p: f64, k: f64) -> Result<f64> {
    ln_p2(eps, n, p, k).map(f64::exp)
}

/// Can overflow to `+∞` for small `N`.
pub fn p3(eps: f64, n: u64, p: f64, k: f64) -> Result<f64> {
    ln_p3(eps, n, p, k).map(f64::exp)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln(P1 + P2 + P3)` with the model-specific arguments.
fn ln_failure_sum(eps: f64, n: u64, mu1: f64, k: usize, model: SparsityModel) -> Result<f64> {
    let kf = k as f64;
    let (frac, k12) = match model {
        SparsityModel::SG(s) => (s as f64 / kf, kf),
        SparsityModel::BG(p) => (p, kf + 2.0 / p),
    };
    Ok(log_sum_exp(&[ln_p1(eps, n, mu1, k12)?, ln_p2(eps, n, frac, k12)?, ln_p3(eps, n, frac, kf)?]))
}

/// `(probability, vacuous)` for `1 − exp(ln_mult + ln_sum)`.
fn clamp_bound(ln_mult: f64, ln_sum: f64) -> (f64, bool) {
    let x = ln_mult + ln_sum;
    if x >= 0.0 {
        (0.0, true)
    } else {
        ((-x.exp_m1()).clamp(0.0, 1.0), false)
    }
}

/// Exact dual when the size fits the solver caps, bounds otherwise.
fn default_method(k: usize, model: SparsityModel) -> Method {
    let cap = match model {
        SparsityModel::SG(_) => SUBSET_EXACT_CAP,
        SparsityModel::BG(_) => BERNOULLI_EXACT_CAP,
    };
    if k - 1 <= cap {
        Method::ExactDual
    } else {
        Method::Bounds
    }
}

struct Sides {
    verdict: Verdict,
    side: MarginSide,
    mu1: f64,
}

fn classify(m0: &GramMatrix, model: SparsityModel, eps: f64, method: Method) -> Result<Sides> {
    if !(eps > 0.0 && eps <= 0.5) {
        return invalid(format!("eps={eps} out of (0, 1/2]"));
    }
    let verdict = population_verdict_with(m0, model, method, &SolverOptions::default())?;
    let margin = (std::f64::consts::PI / 2.0).sqrt() * eps;
    // Use the certified bracket so the side is never claimed on round-off.
    let (lo, hi) = verdict.lhs_bracket;
    let side = if hi <= verdict.rhs - margin {
        MarginSide::SufficientHolds
    } else if lo >= verdict.rhs + margin {
        MarginSide::NecessaryHolds
    } else {
        MarginSide::NeitherMarginMet
    };
    let mu1 = cumulative_coherence(m0, 1)?;
    Ok(Sides { verdict, side, mu1 })
}

fn bound_for(sides: &Sides, k: usize, model: SparsityModel, eps: f64, n: u64) -> Result<(f64, bool)> {
    let ln_mult = match sides.side {
        MarginSide::SufficientHolds => 2.0 * (k as f64).ln(),
        MarginSide::NecessaryHolds => (k as f64).ln(),
        MarginSide::NeitherMarginMet => return Ok((0.0, false)),
    };
    Ok(clamp_bound(ln_mult, ln_failure_sum(eps, n, sides.mu1, k, model)?))
}

pub fn finite_sample_report(
    m0: &GramMatrix,
    model: SparsityModel,
    eps: f64,
    n: u64,
    method: Method,
) -> Result<FiniteSampleReport> {
    let sides = classify(m0, model, eps, method)?;
    let (prob_lower_bound, vacuous) = bound_for(&sides, m0.k(), model, eps, n)?;
    check_common(eps, n, m0.k() as f64)?;
    Ok(FiniteSampleReport { verdict: sides.verdict, epsilon: eps, n, prob_lower_bound, side: sides.side, vacuous })
}

/// Smallest `N` whose probability bound reaches `target_prob`.
pub fn required_samples(m0: &GramMatrix, model: SparsityModel, eps: f64, target_prob: f64) -> Result<u64> {
    if !(target_prob > 0.0 && target_prob < 1.0) {
        return invalid(format!("target probability {target_prob} out of (0, 1)"));
    }
    let k = m0.k();
    model.validate(k)?;
    let sides = classify(m0, model, eps, default_method(k, model))?;
    if sides.side == MarginSide::NeitherMarginMet {
        return Err(Error::MarginNotMet(format!(
            "|lhs − rhs| must exceed √(π/2)·eps = {:.6}; lhs ∈ [{:.6}, {:.6}], rhs = {:.6}",
            (std::f64::consts::PI / 2.0).sqrt() * eps,
            sides.verdict.lhs_bracket.0,
            sides.verdict.lhs_bracket.1,
            sides.verdict.rhs
        )));
    }
    let reaches = |n: u64| -> Result<bool> { Ok(bound_for(&sides, k, model, eps, n)?.0 >= target_prob) };
    let mut hi = 1u64;
    while !reaches(hi)? {
        if hi >= 1 << 62 {
            return invalid("required sample size overflows");
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    if hi == 1 {
        return Ok(1);
    }
    // invariant: !reaches(lo), reaches(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
