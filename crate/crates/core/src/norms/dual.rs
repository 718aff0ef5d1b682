//! Exact dual norm with a certificate.
//!
//! With group weights `ω_S`, both norms read `|||w||| = Σ_S ω_S ‖w[S]‖₂`
//! (`ω_S = 1/C(m-1,s-1)` over `|S| = s`, or `ω_S = pbinom(|S|-1; m-1, p)/C(m-1,|S|-1)`
//! over all nonempty `S`). The dual norm is the value of the cone program
//!
//! ```text
//! minimize  max_S ‖y_S‖₂   subject to   A y := Σ_S ω_S I[S,]ᵀ y_S = z,
//! ```
//!
//! whose Lagrange dual is `max zᵀw s.t. |||w||| ≤ 1`. A log-barrier
//! interior-point method follows the central path of this program. `AAᵀ` is
//! diagonal, so the projection onto `{Ay = z}` is explicit. Each iterate
//! yields a feasible `y` (upper bound) and a multiplier `w` (lower bound);
//! we stop once their gap is below `tol`.

use super::bounds::sorted_abs_desc;
use super::GroupNormParam;
use crate::combinatorics::{binomial, k_subsets, mask_indices, pbinom};
use crate::error::{Error, Result};

/// Largest `m` handled for the subset-size family.
pub const SUBSET_EXACT_CAP: usize = 16;
/// Largest `m` handled for the Bernoulli family (all `2^m - 1` groups).
pub const BERNOULLI_EXACT_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Required certificate gap (absolute).
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-6, max_iters: 2000 }
    }
}

/// A dual-norm value bracketed by a primal and a dual witness.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    /// Midpoint of `[lower, upper]`.
    pub value: f64,
    /// `zᵀw` for the primal witness.
    pub lower: f64,
    /// `max_S ‖y_S‖₂` for the dual witness.
    pub upper: f64,
    /// `upper - lower`.
    pub gap: f64,
    /// `w` with `|||w||| = 1` and `zᵀw = lower`.
    pub primal_witness: Vec<f64>,
    /// `(S, y_S)` pairs with `Σ_S ω_S I[S,]ᵀ y_S = z`.
    pub dual_witness: Vec<(Vec<usize>, Vec<f64>)>,
    pub iterations: usize,
}

/// Dual norm `|||z|||*` to absolute accuracy `tol`, with default iteration cap.
pub fn dual_norm_exact(z: &[f64], param: GroupNormParam, tol: f64) -> Result<DualCertificate> {
    dual_norm_exact_with(z, param, &SolverOptions { tol, ..SolverOptions::default() })
}

/// Group structure of one norm: flattened member lists plus weights.
pub(crate) struct GroupSystem {
    m: usize,
    masks: Vec<u32>,
    starts: Vec<usize>,
    members: Vec<usize>,
    weights: Vec<f64>,
    /// `Σ_{S∋i} ω_S²`, the diagonal of `AAᵀ`.
    coverage: Vec<f64>,
}

impl GroupSystem {
    pub(crate) fn new(m: usize, param: GroupNormParam) -> Result<Self> {
        let (masks, weights): (Vec<u32>, Vec<f64>) = match param {
            GroupNormParam::Subset(s) => {
                if m > SUBSET_EXACT_CAP {
                    return Err(Error::TooLarge { what: "exact dual norm (subset family)", m, cap: SUBSET_EXACT_CAP });
                }
                let w = 1.0 / binomial(m - 1, s - 1);
                k_subsets(m, s).into_iter().map(|mask| (mask, w)).unzip()
            }
            GroupNormParam::Bernoulli(p) => {
                if m > BERNOULLI_EXACT_CAP {
                    return Err(Error::TooLarge { what: "exact dual norm (Bernoulli family)", m, cap: BERNOULLI_EXACT_CAP });
                }
                (1..=m)
                    .flat_map(|size| {
                        let w = pbinom(size - 1, m - 1, p) / binomial(m - 1, size - 1);
                        k_subsets(m, size).into_iter().map(move |mask| (mask, w))
                    })
                    .unzip()
            }
        };
        let mut starts = Vec::with_capacity(masks.len() + 1);
        let mut members = Vec::new();
        let mut coverage = vec![0.0; m];
        starts.push(0);
        for (&mask, &w) in masks.iter().zip(&weights) {
            for i in mask_indices(mask) {
                members.push(i);
                coverage[i] += w * w;
            }
            starts.push(members.len());
        }
        Ok(GroupSystem { m, masks, starts, members, weights, coverage })
    }

    fn groups(&self) -> usize {
        self.masks.len()
    }

    fn range(&self, g: usize) -> std::ops::Range<usize> {
        self.starts[g]..self.starts[g + 1]
    }

    /// `Σ_S ω_S ‖w[S]‖₂`.
    pub(crate) fn norm(&self, w: &[f64]) -> f64 {
        (0..self.groups())
            .map(|g| {
                let sq: f64 = self.members[self.range(g)].iter().map(|&i| w[i] * w[i]).sum();
                self.weights[g] * sq.sqrt()
            })
            .sum()
    }

    fn apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for g in 0..self.groups() {
            let w = self.weights[g];
            for pos in self.range(g) {
                out[self.members[pos]] += w * y[pos];
            }
        }
        out
    }

    /// Orthogonal projection onto `{Ay = z}`.
    fn project_affine(&self, y: &mut [f64], z: &[f64]) {
        let mut r = self.apply(y);
        for i in 0..self.m {
            r[i] = (r[i] - z[i]) / self.coverage[i];
        }
        for g in 0..self.groups() {
            let w = self.weights[g];
            for pos in self.range(g) {
                y[pos] -= w * r[self.members[pos]];
            }
        }
    }

    fn group_norms(&self, y: &[f64]) -> Vec<f64> {
        (0..self.groups())
            .map(|g| y[self.range(g)].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    fn max_group_norm(&self, y: &[f64]) -> f64 {
        self.group_norms(y).into_iter().fold(0.0, f64::max)
    }

    /// Feasible point `y_S[i] = z_i g(|S|) / Σ_{S'∋i} ω_{S'} g(|S'|)`.
    fn scaled_copy(&self, z: &[f64], g: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut y = vec![0.0; self.members.len()];
        let mut norm = vec![0.0; self.m];
        for grp in 0..self.groups() {
            let size = self.starts[grp + 1] - self.starts[grp];
            let factor = g(size);
            for pos in self.range(grp) {
                let i = self.members[pos];
                y[pos] = z[i] * factor;
                norm[i] += self.weights[grp] * factor;
            }
        }
        for pos in 0..y.len() {
            y[pos] /= norm[self.members[pos]];
        }
        y
    }
}

struct Best {
    lower: f64,
    witness: Vec<f64>,
    upper: f64,
    y: Vec<f64>,
}

impl Best {
    fn offer_primal(&mut self, sys: &GroupSystem, z: &[f64], w: &[f64]) {
        let n = sys.norm(w);
        if !(n > 0.0) {
            return;
        }
        let dot: f64 = z.iter().zip(w).map(|(a, b)| a * b).sum();
        let val = dot.abs() / n;
        if val > self.lower {
            let sign = if dot < 0.0 { -1.0 } else { 1.0 };
            self.lower = val;
            self.witness = w.iter().map(|v| sign * v / n).collect();
        }
    }

    fn offer_dual(&mut self, sys: &GroupSystem, y: &[f64]) {
        let val = sys.max_group_norm(y);
        if val < self.upper {
            self.upper = val;
            self.y.clear();
            self.y.extend_from_slice(y);
        }
    }
}

/// Dual norm with explicit solver options.
pub fn dual_norm_exact_with(z: &[f64], param: GroupNormParam, opts: &SolverOptions) -> Result<DualCertificate> {
    let m = z.len();
    param.validate(m)?;
    let sys = GroupSystem::new(m, param)?;

    let scale = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        let mut e1 = vec![0.0; m];
        e1[0] = 1.0;
        return Ok(certificate(&sys, 0.0, e1, 0.0, vec![0.0; sys.members.len()], 1.0, 0));
    }
    let zn: Vec<f64> = z.iter().map(|v| v / scale).collect();
    let tol = opts.tol / scale;

    let mut best = Best { lower: 0.0, witness: Vec::new(), upper: f64::INFINITY, y: Vec::new() };

    // Structured witnesses: sign-pattern indicators of the top-d entries, and
    // the two uniform feasible splittings. These are exact for sparse and
    // constant vectors.
    let order = {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| zn[b].abs().total_cmp(&zn[a].abs()));
        idx
    };
    let mut w = vec![0.0; m];
    for &i in &order {
        w[i] = if zn[i] < 0.0 { -1.0 } else { 1.0 };
        best.offer_primal(&sys, &zn, &w);
    }
    best.offer_dual(&sys, &sys.scaled_copy(&zn, |_| 1.0));
    best.offer_dual(&sys, &sys.scaled_copy(&zn, |n| 1.0 / (n as f64).sqrt()));
    debug_assert!(sorted_abs_desc(&zn)[0] <= best.upper + 1e-12);

    if best.upper - best.lower <= tol {
        return Ok(finish(&sys, best, scale, 0));
    }

    let iterations = barrier(&sys, &zn, tol, opts.max_iters, &mut best).map_err(|e| match e {
        Error::NotConverged { iterations, gap } => Error::NotConverged { iterations, gap: gap * scale },
        other => other,
    })?;
    Ok(finish(&sys, best, scale, iterations))
}

/// Primal log-barrier method on
/// `min τt − Σ_S log(t² − ‖y_S‖²)  s.t.  Ay = z`, increasing `τ` along the
/// central path. Each Newton system reduces to `m + 1` unknowns (`Δt` and the
/// multiplier `ν` of `Ay = z`) because every cone block has a closed-form
/// inverse. The iterate `y` supplies upper bounds and `ν` the primal witness.
/// Returns the number of Newton steps.
fn barrier(sys: &GroupSystem, z: &[f64], tol: f64, max_steps: usize, best: &mut Best) -> Result<usize> {
    let m = sys.m;
    let groups = sys.groups();
    let mut y = best.y.clone();
    let mut t = 1.1 * sys.max_group_norm(&y) + 1e-3;
    let mut tau = 2.0 * groups as f64 / (best.upper - best.lower).max(tol);
    const TAU_GROWTH: f64 = 20.0;
    const CENTERED: f64 = 1e-7;

    // f(t + s·dt, y + s·dy) − f(t, y), evaluated without cancellation;
    // +∞ when the step leaves the cone interior.
    let delta_objective = |t: f64, y: &[f64], d: &[f64], s: f64, dt: f64, dy: &[f64], tau: f64| -> f64 {
        let t1 = t + s * dt;
        if !(t1 > 0.0) {
            return f64::INFINITY;
        }
        let mut delta = tau * s * dt;
        let tt = s * dt * (t1 + t);
        for g in 0..groups {
            let mut yy = 0.0;
            for k in sys.range(g) {
                let step = s * dy[k];
                yy += step * (2.0 * y[k] + step);
            }
            let rel = (tt - yy) / d[g];
            if !(rel > -1.0) {
                return f64::INFINITY;
            }
            delta -= rel.ln_1p();
        }
        delta
    };

    let mut d = vec![0.0; groups];
    let mut n2 = vec![0.0; groups];
    let mut dy = vec![0.0; y.len()];
    for step in 1..=max_steps {
        // Residual drift of Ay = z from round-off is folded into the step.
        let ay = sys.apply(&y);
        let r: Vec<f64> = (0..m).map(|i| z[i] - ay[i]).collect();

        let mut g_t = tau;
        let mut h_tt = 0.0;
        let mut hh = 0.0; // hᵀH⁻¹h
        let mut hg = 0.0; // hᵀH⁻¹g
        let mut b = vec![0.0; m]; // B H⁻¹ h
        let mut c = r.clone(); // r + B H⁻¹ g
        let mut mm = nalgebra::DMatrix::<f64>::zeros(m, m); // B H⁻¹ Bᵀ
        for g in 0..groups {
            let range = sys.range(g);
            let ys = &y[range.clone()];
            n2[g] = ys.iter().map(|v| v * v).sum();
            d[g] = t * t - n2[g];
            let (dg, ng) = (d[g], n2[g]);
            g_t -= 2.0 * t / dg;
            h_tt += -2.0 / dg + 4.0 * t * t / (dg * dg);
            // H_S⁻¹ y_S = κ y_S
            let kappa = dg * dg / (2.0 * (dg + 2.0 * ng));
            let hs = -4.0 * t / (dg * dg);
            let gs = 2.0 / dg;
            hh += hs * hs * kappa * ng;
            hg += hs * gs * kappa * ng;
            let w = sys.weights[g];
            let members = &sys.members[range];
            let rank_one = 2.0 / (dg + 2.0 * ng);
            for (a, &i) in members.iter().enumerate() {
                b[i] += w * hs * kappa * ys[a];
                c[i] += w * gs * kappa * ys[a];
                let base = w * w * 0.5 * dg;
                for (bb, &j) in members.iter().enumerate() {
                    let delta = if a == bb { 1.0 } else { 0.0 };
                    mm[(i, j)] += base * (delta - rank_one * ys[a] * ys[bb]);
                }
            }
        }
        let a11 = h_tt - hh;
        let rhs1 = -g_t + hg;
        let chol = match mm.clone().cholesky() {
            Some(ch) => ch,
            None => break,
        };
        let bv = nalgebra::DVector::from_vec(b);
        let cv = nalgebra::DVector::from_vec(c);
        let minv_b = chol.solve(&bv);
        let minv_c = chol.solve(&cv);
        let dt = (rhs1 - bv.dot(&minv_c)) / (a11 + bv.dot(&minv_b));
        let nu = -(minv_c + minv_b * dt);

        let mut decrement = -g_t * dt;
        for g in 0..groups {
            let range = sys.range(g);
            let (dg, ng) = (d[g], n2[g]);
            let w = sys.weights[g];
            let hs = -4.0 * t / (dg * dg);
            let gs = 2.0 / dg;
            let ys = &y[range.clone()];
            let members = &sys.members[range.clone()];
            let mut q: Vec<f64> = ys.iter().zip(members).map(|(v, &i)| -gs * v - hs * v * dt - w * nu[i]).collect();
            let yq: f64 = ys.iter().zip(&q).map(|(a, b)| a * b).sum();
            let coef = 2.0 * yq / (dg + 2.0 * ng);
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = 0.5 * dg * (*qa - coef * ys[a]);
            }
            for (pos, qa) in range.zip(q) {
                dy[pos] = qa;
                decrement -= gs * y[pos] * qa;
            }
        }

        let w_cand: Vec<f64> = nu.iter().copied().collect();
        best.offer_primal(sys, z, &w_cand);

        // Backtracking line search that keeps every cone strictly feasible.
        let slope = -decrement;
        let mut s = 1.0;
        let mut accepted = false;
        while s > 1e-12 {
            let df = delta_objective(t, &y, &d, s, dt, &dy, tau);
            if df.is_finite() && df <= 0.25 * s * slope {
                t += s * dt;
                for k in 0..y.len() {
                    y[k] += s * dy[k];
                }
                accepted = true;
                break;
            }
            s *= 0.5;
        }

        let mut yp = y.clone();
        sys.project_affine(&mut yp, z);
        best.offer_dual(sys, &yp);
        if best.upper - best.lower <= tol {
            return Ok(step);
        }
        if !accepted || decrement.abs() * 0.5 <= CENTERED {
            tau *= TAU_GROWTH;
        }
    }
    Err(Error::NotConverged { iterations: max_steps, gap: best.upper - best.lower })
}

fn finish(sys: &GroupSystem, best: Best, scale: f64, iterations: usize) -> DualCertificate {
    certificate(sys, best.lower, best.witness, best.upper, best.y, scale, iterations)
}

fn certificate(
    sys: &GroupSystem,
    lower: f64,
    witness: Vec<f64>,
    upper: f64,
    y: Vec<f64>,
    scale: f64,
    iterations: usize,
) -> DualCertificate {
    let dual_witness = (0..sys.groups())
        .map(|g| {
            let idx = sys.members[sys.range(g)].to_vec();
            let vals = y[sys.range(g)].iter().map(|v| v * scale).collect();
            (idx, vals)
        })
        .collect();
    let (lower, upper) = (lower * scale, upper * scale);
    DualCertificate {
        value: 0.5 * (lower + upper),
        lower,
        upper,
        gap: upper - lower,
        primal_witness: witness,
        dual_witness,
        iterations,
    }
}
