//! The ℓ1 objective and subgradient descent on the oblique manifold.
//!
//! For a complete dictionary the sparse code of `x` is `D⁻¹x`, so the
//! empirical objective is `L_N(D) = (1/N) Σ_i ‖D⁻¹x_i‖₁`. Its expectation has
//! a closed form in `H = D⁻¹D0`:
//!
//! * `SG(s)`, `s < K`: `√(2/π)(s/K) Σ_j |||H[j,]|||_s`
//! * `BG(p)`, `p < 1`: `√(2/π) p Σ_j |||H[j,]|||_p`
//! * non-sparse: `√(2/π) Σ_j ‖H[j,]‖₂`

use nalgebra::DMatrix;

use crate::dictionary::{dictionary_distance, normalize_columns, Dictionary};
use crate::error::{invalid, Error, Result};
use crate::models::{SignalBatch, SparsityModel};
use crate::norms::{group_norm, GroupNormParam};

fn sqrt_2_over_pi() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

fn check_dims(k: usize, other: usize) -> Result<()> {
    if k != other {
        return Err(Error::DimensionMismatch { expected: k, got: other });
    }
    Ok(())
}

fn inverse(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    d.clone().try_inverse().ok_or(Error::RankDeficient { sigma_min: 0.0, sigma_max: 0.0 })
}

/// Expected `‖D⁻¹x‖₁` for `x = D0 α`, `α` drawn from `model`.
pub fn population_objective(d: &Dictionary, d0: &Dictionary, model: SparsityModel) -> Result<f64> {
    let k = d.k();
    check_dims(k, d0.k())?;
    model.validate(k)?;
    let h = inverse(d.matrix())? * d0.matrix();
    let rows = (0..k).map(|j| h.row(j).iter().copied().collect::<Vec<f64>>());
    let total: f64 = if model.is_non_sparse(k) {
        rows.map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).sum()
    } else {
        let param = match model {
            SparsityModel::SG(s) => GroupNormParam::Subset(s),
            SparsityModel::BG(p) => GroupNormParam::Bernoulli(p),
        };
        let mut acc = 0.0;
        for r in rows {
            acc += group_norm(&r, param)?;
        }
        acc * model.fraction(k)
    };
    Ok(sqrt_2_over_pi() * total)
}

/// `(1/N) Σ_i ‖D⁻¹x_i‖₁` for any invertible square `d` (columns need not be unit).
pub fn empirical_objective_raw(d: &DMatrix<f64>, signals: &DMatrix<f64>) -> Result<f64> {
    check_dims(d.ncols(), signals.nrows())?;
    if signals.ncols() == 0 {
        return invalid("empty batch");
    }
    let y = inverse(d)? * signals;
    Ok(y.iter().map(|v| v.abs()).sum::<f64>() / signals.ncols() as f64)
}

pub fn empirical_objective(d: &Dictionary, batch: &SignalBatch) -> Result<f64> {
    empirical_objective_raw(d.matrix(), &batch.signals)
}

/// `G = −(1/N) Wᵀ sgn(WX) (WX)ᵀ` with `W = D⁻¹` and `sgn(0) = 0`, plus the objective.
/// Takes the signals transposed (`N × K`) so the reduction runs over contiguous columns.
fn subgradient_and_value(d: &DMatrix<f64>, signals_t: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    check_dims(d.ncols(), signals_t.ncols())?;
    let n = signals_t.nrows();
    if n == 0 {
        return invalid("empty batch");
    }
    let w = inverse(d)?;
    let yt = signals_t * w.transpose();
    let value = yt.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let sgn = yt.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 });
    let inner = sgn.tr_mul(&yt);
    let g = -(w.transpose() * inner) / n as f64;
    Ok((g, value))
}

/// Euclidean subgradient for any invertible square `d`.
pub fn empirical_subgradient_raw(d: &DMatrix<f64>, signals: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(d.ncols(), signals.nrows())?;
    subgradient_and_value(d, &signals.transpose()).map(|(g, _)| g)
}

pub fn empirical_subgradient(d: &Dictionary, batch: &SignalBatch) -> Result<DMatrix<f64>> {
    empirical_subgradient_raw(d.matrix(), &batch.signals)
}

/// Removes from each column of `g` its component along the matching column of `d`.
pub fn project_tangent(d: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = g.clone();
    for k in 0..d.ncols() {
        let c = d.column(k).dot(&g.column(k));
        out.column_mut(k).axpy(-c, &d.column(k), 1.0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub max_iters: usize,
    /// `η_t = step0 / √t`.
    pub step0: f64,
    /// Stop when the relative objective change between iterates drops below this.
    pub stop_tol: f64,
    /// Abort once the smallest singular value falls below this.
    pub singular_guard: f64,
    /// Also stop once the best objective has not improved for this many iterations.
    pub patience: Option<usize>,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig { max_iters: 5000, step0: 0.1, stop_tol: 1e-8, singular_guard: 1e-8, patience: None }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step0 >= 0.0 && self.stop_tol > 0.0 && self.singular_guard > 0.0) {
            return invalid("descent step0 must be nonnegative, stop_tol and singular_guard positive");
        }
        if self.patience == Some(0) {
            return invalid("descent patience must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentTrace {
    /// Best iterate by objective.
    pub final_d: Dictionary,
    /// `dictionary_distance(final_d, D0)`.
    pub final_error: f64,
    /// Best objective so far, one entry per iterate (starting with `D_init`).
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub aborted_singular: bool,
}

/// Projected subgradient descent on the oblique manifold, started at `d_init`.
pub fn manifold_descent(d_init: &Dictionary, batch: &SignalBatch, cfg: &DescentConfig, d0: &Dictionary) -> Result<DescentTrace> {
    cfg.validate()?;
    check_dims(d_init.k(), d0.k())?;
    check_dims(d_init.k(), batch.k())?;
    let x = &batch.signals.transpose();
    let mut d = d_init.matrix().clone();
    let (mut g, mut f) = subgradient_and_value(&d, x)?;
    let mut best = (d.clone(), f);
    let mut history = vec![f];
    let (mut converged, mut aborted_singular) = (false, false);
    let mut iterations = 0;
    let mut best_at = 0;
    for t in 1..=cfg.max_iters {
        let gt = project_tangent(&d, &g);
        if gt.iter().all(|v| *v == 0.0) || cfg.step0 == 0.0 {
            converged = true;
            break;
        }
        let mut next = &d - gt * (cfg.step0 / (t as f64).sqrt());
        normalize_columns(&mut next);
        iterations = t;
        if next.singular_values().min() < cfg.singular_guard {
            aborted_singular = true;
            break;
        }
        let (g_next, f_next) = match subgradient_and_value(&next, x) {
            Ok(v) => v,
            Err(Error::RankDeficient { .. }) => {
                aborted_singular = true;
                break;
            }
            Err(e) => return Err(e),
        };
        d = next;
        if f_next < best.1 {
            best = (d.clone(), f_next);
            best_at = t;
        }
        history.push(best.1);
        let rel = (f_next - f).abs() / f.abs().max(f64::MIN_POSITIVE);
        g = g_next;
        f = f_next;
        if rel < cfg.stop_tol || cfg.patience.is_some_and(|p| t - best_at >= p) {
            converged = true;
            break;
        }
    }
    let final_d = Dictionary::from_parts_unchecked(best.0);
    let final_error = dictionary_distance(&final_d, d0)?;
    Ok(DescentTrace { final_d, final_error, objective_history: history, iterations, converged, aborted_singular })
}
