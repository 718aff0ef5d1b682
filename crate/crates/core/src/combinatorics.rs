//! Binomial / hypergeometric helpers and subset enumeration over bitmasks.

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (1..=k)
        .map(|i| ((n - k + i) as f64).ln() - (i as f64).ln())
        .sum()
}

/// `C(n, k)` as a float. Exact for the sizes used here (n ≤ 64).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 1..=k {
        acc = acc * (n - k + i) as f64 / i as f64;
    }
    acc.round()
}

/// Binomial probability mass `C(n,k) p^k (1-p)^(n-k)`, evaluated in log space.
pub fn pbinom(k: usize, n: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// Full binomial pmf vector `[pbinom(0;n,p), ..., pbinom(n;n,p)]`.
pub fn pbinom_vec(n: usize, p: f64) -> Vec<f64> {
    (0..=n).map(|k| pbinom(k, n, p)).collect()
}

/// Hypergeometric pmf: probability of `l` ones when drawing `k` items without
/// replacement from `d` ones and `m - d` zeros.
pub fn hypergeom_pmf(l: usize, m: usize, d: usize, k: usize) -> f64 {
    if l > d || l > k || k - l > m - d {
        return 0.0;
    }
    (ln_binomial(d, l) + ln_binomial(m - d, k - l) - ln_binomial(m, k)).exp()
}

/// All size-`k` subsets of `{0..m}` as bitmasks, in increasing numeric order.
pub fn k_subsets(m: usize, k: usize) -> Vec<u32> {
    assert!(m <= 31, "bitmask enumeration supports m <= 31");
    if k > m {
        return Vec::new();
    }
    if k == 0 {
        return vec![0];
    }
    let mut out = Vec::with_capacity(binomial(m, k) as usize);
    let limit = 1u32 << m;
    let mut mask: u32 = (1u32 << k) - 1;
    while mask < limit {
        out.push(mask);
        // Gosper's hack: next integer with the same popcount.
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    out
}

/// Indices set in `mask`, ascending.
pub fn mask_indices(mask: u32) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    let mut rest = mask;
    while rest != 0 {
        let i = rest.trailing_zeros() as usize;
        out.push(i);
        rest &= rest - 1;
    }
    out
}

/// Largest `m` for which [`subset_norm_sums`] enumerates all `2^m` subsets.
pub const SUBSET_SUM_CAP: usize = 22;

/// For every `k` in `0..=m`, the sum of `‖w[S]‖₂` over all subsets `S` with
/// `|S| = k`. One pass over all `2^m` masks.
pub fn subset_norm_sums(w: &[f64]) -> Vec<f64> {
    let m = w.len();
    assert!(m <= SUBSET_SUM_CAP, "subset enumeration capped at m = {SUBSET_SUM_CAP}");
    let n = 1usize << m;
    let sq: Vec<f64> = w.iter().map(|x| x * x).collect();
    let mut partial = vec![0.0f64; n];
    let mut sums = vec![0.0f64; m + 1];
    for mask in 1..n {
        let low = mask.trailing_zeros() as usize;
        let v = partial[mask & (mask - 1)] + sq[low];
        partial[mask] = v;
        sums[mask.count_ones() as usize] += v.sqrt();
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(16, 8), 12870.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert!((ln_binomial(30, 15) - (155117520f64).ln()).abs() < 1e-10);
    }

    #[test]
    fn pbinom_sums_to_one_even_for_large_n() {
        let total: f64 = pbinom_vec(64, 0.37).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((pbinom(1, 2, 0.5) - 0.5).abs() < 1e-15);
        let tail = pbinom(2000, 2000, 0.01);
        assert!(tail >= 0.0 && tail.is_finite());
    }

    #[test]
    fn hypergeom_small_case() {
        // m=4, d=2, k=2: P(L=0)=1/6, P(L=1)=4/6, P(L=2)=1/6
        assert!((hypergeom_pmf(0, 4, 2, 2) - 1.0 / 6.0).abs() < 1e-14);
        assert!((hypergeom_pmf(1, 4, 2, 2) - 4.0 / 6.0).abs() < 1e-14);
        assert!((hypergeom_pmf(2, 4, 2, 2) - 1.0 / 6.0).abs() < 1e-14);
        assert_eq!(hypergeom_pmf(3, 4, 2, 2), 0.0);
    }

    #[test]
    fn k_subsets_counts() {
        for m in 1..=10 {
            for k in 0..=m {
                let subs = k_subsets(m, k);
                assert_eq!(subs.len() as f64, binomial(m, k));
                assert!(subs.iter().all(|s| s.count_ones() as usize == k));
            }
        }
        assert_eq!(mask_indices(0b1011), vec![0, 1, 3]);
    }

    #[test]
    fn subset_norm_sums_match_direct_enumeration() {
        let w = [3.0, -4.0, 0.0, 1.5];
        let sums = subset_norm_sums(&w);
        for k in 0..=w.len() {
            let direct: f64 = k_subsets(w.len(), k)
                .into_iter()
                .map(|s| {
                    mask_indices(s)
                        .into_iter()
                        .map(|i| w[i] * w[i])
                        .sum::<f64>()
                        .sqrt()
                })
                .sum();
            assert!((sums[k] - direct).abs() < 1e-12, "k={k}");
        }
    }
}
