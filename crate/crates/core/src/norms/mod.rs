//! The group norms `|||·|||_k` and `|||·|||_p`, their duals, and the
//! hypergeometric quantities used to bound the duals.
//!
//! For `w ∈ R^m`:
//!
//! * `|||w|||_k = Σ_{|S|=k} ‖w[S]‖₂ / C(m-1, k-1)`, an average of subset ℓ2
//!   norms (`|||w|||_1 = ‖w‖₁`, `|||w|||_m = ‖w‖₂`);
//! * `|||w|||_p = Σ_{k=0}^{m-1} pbinom(k; m-1, p) |||w|||_{k+1}`.
//!
//! Both are group-lasso norms with overlapping groups, so their duals have no
//! closed form in general; [`dual_norm_exact`] solves the second-order cone
//! program for small `m` and [`dual_norm_bounds`] sandwiches the dual cheaply
//! for any `m`.

pub(crate) mod bounds;
pub(crate) mod dual;
mod hypergeom;

pub use bounds::{dual_norm_bounds, dual_norm_closed_form_edges, dual_norm_coarse_lower};
pub use dual::{
    dual_norm_exact, dual_norm_exact_with, DualCertificate, SolverOptions, BERNOULLI_EXACT_CAP, SUBSET_EXACT_CAP,
};
pub use hypergeom::{hb, hypergeom_sqrt_mean};

use crate::combinatorics::{binomial, pbinom, subset_norm_sums, SUBSET_SUM_CAP};
use crate::error::{invalid, Error, Result};

/// Which member of the norm family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupNormParam {
    /// `|||·|||_k`, average over size-`k` subsets.
    Subset(usize),
    /// `|||·|||_p`, binomial mixture of the subset norms.
    Bernoulli(f64),
}

impl GroupNormParam {
    pub fn validate(&self, m: usize) -> Result<()> {
        if m == 0 {
            return invalid("vector must be nonempty");
        }
        match *self {
            GroupNormParam::Subset(k) if k == 0 || k > m => {
                invalid(format!("subset size k={k} out of range [1, {m}]"))
            }
            GroupNormParam::Bernoulli(p) if !(p > 0.0 && p < 1.0) => {
                invalid(format!("Bernoulli parameter p={p} must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }
}

/// `|||w|||_k` for every `k = 1..=m` (index 0 of the result holds `k = 1`).
pub fn subset_norms(w: &[f64]) -> Result<Vec<f64>> {
    let m = w.len();
    if m > SUBSET_SUM_CAP {
        return Err(Error::TooLarge { what: "group norm enumeration", m, cap: SUBSET_SUM_CAP });
    }
    let sums = subset_norm_sums(w);
    Ok((1..=m).map(|k| sums[k] / binomial(m - 1, k - 1)).collect())
}

/// Evaluates `|||w|||_k` or `|||w|||_p` by subset enumeration (`m ≤ 22`).
pub fn group_norm(w: &[f64], param: GroupNormParam) -> Result<f64> {
    let m = w.len();
    param.validate(m)?;
    let norms = subset_norms(w)?;
    Ok(match param {
        GroupNormParam::Subset(k) => norms[k - 1],
        GroupNormParam::Bernoulli(p) => norms
            .iter()
            .enumerate()
            .map(|(k, v)| pbinom(k, m - 1, p) * v)
            .sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_values() {
        assert!((group_norm(&[3.0, 4.0, 12.0], GroupNormParam::Subset(1)).unwrap() - 19.0).abs() < 1e-12);
        assert!((group_norm(&[3.0, 4.0, 0.0], GroupNormParam::Subset(2)).unwrap() - 6.0).abs() < 1e-12);
        assert!((group_norm(&[3.0, 4.0], GroupNormParam::Bernoulli(0.5)).unwrap() - 6.0).abs() < 1e-12);
        assert!((group_norm(&[3.0, 4.0, 12.0], GroupNormParam::Subset(3)).unwrap() - 13.0).abs() < 1e-12);
        assert_eq!(group_norm(&[-2.5], GroupNormParam::Subset(1)).unwrap(), 2.5);
        assert_eq!(group_norm(&[-2.5], GroupNormParam::Bernoulli(0.3)).unwrap(), 2.5);
    }

    #[test]
    fn parameter_validation() {
        assert!(group_norm(&[1.0, 2.0], GroupNormParam::Subset(3)).is_err());
        assert!(group_norm(&[1.0, 2.0], GroupNormParam::Subset(0)).is_err());
        assert!(group_norm(&[1.0, 2.0], GroupNormParam::Bernoulli(1.0)).is_err());
        assert!(group_norm(&[], GroupNormParam::Subset(1)).is_err());
    }

    #[test]
    fn binomial_average_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let m = rng.random_range(1..10);
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p: f64 = rng.random_range(0.01..0.99);
            let via_param = group_norm(&w, GroupNormParam::Bernoulli(p)).unwrap();
            let via_subsets: f64 = (0..m)
                .map(|k| pbinom(k, m - 1, p) * group_norm(&w, GroupNormParam::Subset(k + 1)).unwrap())
                .sum();
            assert!((via_param - via_subsets).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoints_are_l1_and_l2() {
        let w = [1.0, -2.0, 0.5, 3.0, -0.25];
        let l1: f64 = w.iter().map(|x: &f64| x.abs()).sum();
        let l2: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((group_norm(&w, GroupNormParam::Subset(1)).unwrap() - l1).abs() < 1e-12);
        assert!((group_norm(&w, GroupNormParam::Subset(5)).unwrap() - l2).abs() < 1e-12);
    }
}
