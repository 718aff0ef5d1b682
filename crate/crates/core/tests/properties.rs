use l1dict::dictionary::SignedPermutation;
use l1dict::finite_sample::{finite_sample_report, p1, p2, p3};
use l1dict::identifiability::{derivative_scale, random_tangent_direction};
use l1dict::objective::project_tangent;
use l1dict::{
    constant_mu_dictionary, constant_mu_gram, cumulative_coherence, dictionary_distance, directional_derivative,
    dual_norm_bounds, dual_norm_exact, empirical_objective, generate_signals, gram, group_norm, hypergeom_sqrt_mean,
    manifold_descent, population_objective, population_verdict, DescentConfig, Dictionary, GramMatrix, GroupNormParam,
    Method, Side, SparsityModel, Status,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn vector(max_m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => -2.0..2.0f64, 1 => Just(0.0)], 2..=max_m)
}

fn nonzeros(z: &[f64]) -> usize {
    z.iter().filter(|v| **v != 0.0).count()
}

fn dictionary(k: usize, seed: u64) -> Dictionary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dictionary::normalized(DMatrix::from_fn(k, k, |_, _| rng.sample(StandardNormal))).unwrap()
}

fn near_identity(k: usize, sigma: f64, seed: u64) -> Dictionary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dictionary::normalized(DMatrix::identity(k, k) + DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal)) * sigma)
        .unwrap()
}

fn signed_permutation(k: usize, seed: u64) -> SignedPermutation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let signs = (0..k).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    SignedPermutation::new(perm, signs).unwrap()
}

fn brute_force_distance(da: &Dictionary, db: &Dictionary) -> f64 {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }
    let k = da.k();
    let mut best = f64::INFINITY;
    for p in perms(k) {
        for mask in 0..(1u32 << k) {
            let mut sq = 0.0;
            for (c, &j) in p.iter().enumerate() {
                let sign = if mask >> c & 1 == 1 { -1.0 } else { 1.0 };
                sq += (da.matrix().column(c) - db.matrix().column(j) * sign).norm_squared();
            }
            best = best.min(sq.sqrt());
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_mu_gram_of_dictionary(k in 1usize..=32, i in 0usize..19) {
        let mu = -0.9 / 32.0 + i as f64 * 0.05;
        let g = gram(&constant_mu_dictionary(k, mu).unwrap()).unwrap();
        for r in 0..k {
            for c in 0..k {
                let want = if r == c { 1.0 } else { mu };
                prop_assert!((g.matrix()[(r, c)] - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn distance_is_a_pseudometric_on_classes(k in 2usize..=6, seeds in (any::<u64>(), any::<u64>(), any::<u64>(), any::<u64>())) {
        let (a, b, c) = (dictionary(k, seeds.0), dictionary(k, seeds.1), dictionary(k, seeds.2));
        let ab = dictionary_distance(&a, &b).unwrap();
        prop_assert!((ab - dictionary_distance(&b, &a).unwrap()).abs() < 1e-10);
        let ac = dictionary_distance(&a, &c).unwrap();
        let cb = dictionary_distance(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-10);
        let member = a.apply(&signed_permutation(k, seeds.3)).unwrap();
        prop_assert!(dictionary_distance(&a, &member).unwrap() < 1e-12);
        prop_assert!((dictionary_distance(&member, &b).unwrap() - ab).abs() < 1e-10);
    }

    #[test]
    fn distance_matches_exhaustive_search(k in 1usize..=5, s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (dictionary(k, s1), dictionary(k, s2));
        prop_assert!((dictionary_distance(&a, &b).unwrap() - brute_force_distance(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn norm_strictly_decreasing_in_k(z in vector(10)) {
        let m = z.len();
        let norms: Vec<f64> = (1..=m).map(|k| group_norm(&z, GroupNormParam::Subset(k)).unwrap()).collect();
        for w in norms.windows(2) {
            if nonzeros(&z) <= 1 {
                prop_assert!((w[0] - w[1]).abs() <= 1e-12 * (1.0 + w[0]));
            } else {
                prop_assert!(w[1] < w[0]);
            }
        }
    }

    #[test]
    fn norm_convex_in_k(z in vector(10)) {
        let m = z.len();
        let n: Vec<f64> = (1..=m).map(|k| group_norm(&z, GroupNormParam::Subset(k)).unwrap()).collect();
        for k in 0..m.saturating_sub(2) {
            prop_assert!(n[k] + n[k + 2] >= 2.0 * n[k + 1] - 1e-12);
        }
    }

    #[test]
    fn bernoulli_norm_is_binomial_average(z in vector(10), p in 0.01..0.99f64) {
        let m = z.len();
        let direct = group_norm(&z, GroupNormParam::Bernoulli(p)).unwrap();
        // pbinom(k; m−1, p) built by the multiplicative recurrence
        let mut pmf = (1.0 - p).powi(m as i32 - 1);
        let mut mixed = 0.0;
        for k in 0..m {
            mixed += pmf * group_norm(&z, GroupNormParam::Subset(k + 1)).unwrap();
            pmf *= (m - 1 - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
        }
        prop_assert!((direct - mixed).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn hypergeometric_sqrt_mean_concave(m in 1usize..=14, d_frac in 0.0..=1.0f64) {
        let d = (d_frac * m as f64).round() as usize;
        let f: Vec<f64> = (0..=m).map(|k| hypergeom_sqrt_mean(m, d, k).unwrap()).collect();
        for k in 0..m.saturating_sub(1) {
            prop_assert!(f[k] + f[k + 2] <= 2.0 * f[k + 1] + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dual_monotone_in_k(z in vector(8)) {
        prop_assume!(nonzeros(&z) > 0);
        let m = z.len();
        let d: Vec<_> = (1..=m).map(|k| dual_norm_exact(&z, GroupNormParam::Subset(k), 1e-8).unwrap()).collect();
        for w in d.windows(2) {
            if nonzeros(&z) == 1 {
                prop_assert!((w[0].value - w[1].value).abs() <= 1e-7);
            } else {
                prop_assert!(w[0].lower <= w[1].upper + 1e-9);
            }
        }
    }

    #[test]
    fn sandwich_and_certificate(z in vector(10), k_frac in 0.0..1.0f64, p in 0.02..0.98f64, tol in prop_oneof![Just(1e-4), Just(1e-6), Just(1e-8)]) {
        let m = z.len();
        let k = 1 + (k_frac * m as f64) as usize;
        for param in [GroupNormParam::Subset(k.min(m)), GroupNormParam::Bernoulli(p)] {
            let c = dual_norm_exact(&z, param, tol).unwrap();
            let (lo, hi) = dual_norm_bounds(&z, param).unwrap();
            prop_assert!(c.gap <= tol);
            prop_assert!(lo <= c.upper + 1e-9 && c.lower <= hi + 1e-9, "{lo} {} {} {hi}", c.lower, c.upper);
        }
    }

    #[test]
    fn bernoulli_dual_below_subset_dual(z in vector(10), p in 0.02..0.98f64) {
        let m = z.len();
        let k = (((m - 1) as f64 * p + 1.0).ceil() as usize).min(m);
        let dp = dual_norm_exact(&z, GroupNormParam::Bernoulli(p), 1e-8).unwrap();
        let dk = dual_norm_exact(&z, GroupNormParam::Subset(k), 1e-8).unwrap();
        prop_assert!(dp.lower <= dk.upper + 1e-9);
    }
}

/// Largest `zᵀw/|||w|||` found by random search plus coordinate hill climbing.
fn dual_by_search(z: &[f64], param: GroupNormParam, rng: &mut ChaCha8Rng) -> f64 {
    let m = z.len();
    let ratio = |w: &[f64]| {
        let n = group_norm(w, param).unwrap();
        if n == 0.0 { f64::NEG_INFINITY } else { z.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / n }
    };
    let mut best: Vec<f64> = z.to_vec();
    let mut best_val = ratio(&best);
    for _ in 0..2000 {
        let w: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let v = ratio(&w);
        if v > best_val {
            best_val = v;
            best = w;
        }
    }
    let scale = best.iter().map(|v| v.abs()).fold(0.0, f64::max);
    best.iter_mut().for_each(|v| *v /= scale);
    let mut step = 0.5;
    let mut rounds = 0;
    while step > 1e-7 && rounds < 20_000 {
        rounds += 1;
        let mut improved = false;
        for i in 0..m {
            for dir in [step, -step] {
                let mut w = best.clone();
                w[i] += dir;
                let v = ratio(&w);
                if v > best_val {
                    best_val = v;
                    best = w;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best_val
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dual_matches_direct_maximization(z in vector(6), k_frac in 0.0..1.0f64, p in 0.05..0.95f64, seed in any::<u64>()) {
        prop_assume!(nonzeros(&z) > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = z.len();
        for param in [GroupNormParam::Subset(1 + ((k_frac * m as f64) as usize).min(m - 1)), GroupNormParam::Bernoulli(p)] {
            let exact = dual_norm_exact(&z, param, 1e-9).unwrap();
            let found = dual_by_search(&z, param, &mut rng);
            prop_assert!(found <= exact.upper + 1e-9, "{param:?}: search {found} above {}", exact.upper);
            prop_assert!(found >= exact.lower - 1e-3, "{param:?}: search {found} far below {}", exact.lower);
        }
    }

    #[test]
    fn batches_deterministic_per_seed(k in 2usize..=6, s_frac in 0.0..1.0f64, seed in any::<u64>()) {
        let d0 = dictionary(k, seed ^ 1);
        let model = SparsityModel::SG(1 + ((s_frac * k as f64) as usize).min(k - 1));
        let a = generate_signals(&d0, model, 50, seed).unwrap();
        let b = generate_signals(&d0, model, 50, seed).unwrap();
        prop_assert_eq!(a.signals.as_slice(), b.signals.as_slice());
        prop_assert_eq!(a.coefficients.as_slice(), b.coefficients.as_slice());
    }

    #[test]
    fn cumulative_coherence_monotone(k in 2usize..=8, sigma in 0.05..1.0f64, seed in any::<u64>()) {
        let g = gram(&near_identity(k, sigma, seed)).unwrap();
        let c: Vec<f64> = (1..k).map(|j| cumulative_coherence(&g, j).unwrap()).collect();
        prop_assert!((c[0] - g.mutual_coherence()).abs() < 1e-12);
        prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn worst_column_dual_monotone_in_s(k in 3usize..=7, sigma in 0.05..0.6f64, seed in any::<u64>()) {
        let g = gram(&near_identity(k, sigma, seed)).unwrap();
        let worst = |s: usize| -> (f64, f64) {
            (0..k).map(|j| dual_norm_exact(&g.column_without_diagonal(j), GroupNormParam::Subset(s), 1e-8).unwrap())
                .fold((0.0, 0.0), |acc, c| (acc.0.max(c.lower), acc.1.max(c.upper)))
        };
        let v: Vec<(f64, f64)> = (1..k).map(worst).collect();
        for w in v.windows(2) {
            prop_assert!(w[0].0 <= w[1].1 + 1e-9);
        }
    }

    #[test]
    fn bounds_never_contradict_exact(k in 3usize..=8, sigma in 0.02..0.8f64, seed in any::<u64>(), sp in 0.05..0.95f64, use_sg in any::<bool>()) {
        let g = gram(&near_identity(k, sigma, seed)).unwrap();
        let model = if use_sg { SparsityModel::SG(1 + ((sp * (k - 1) as f64) as usize).min(k - 2)) } else { SparsityModel::BG(sp) };
        let b = population_verdict(&g, model, Method::Bounds).unwrap();
        let e = population_verdict(&g, model, Method::ExactDual).unwrap();
        if b.status != Status::Indeterminate && e.status != Status::Indeterminate {
            prop_assert_eq!(b.status, e.status, "{} bounds {:?} exact {:?}", model, b, e);
        }
    }

    #[test]
    fn coherence_condition_implies_sufficient_check(k in 2usize..=20, mu in 0.0..0.5f64, p in 0.02..0.98f64) {
        prop_assume!((k as f64).sqrt() * mu < 1.0 - p);
        let v = population_verdict(&constant_mu_gram(k, mu).unwrap(), SparsityModel::BG(p), Method::Bounds).unwrap();
        prop_assert_eq!(v.status, Status::Identifiable);
    }

    #[test]
    fn derivative_signs_follow_verdict(k in 3usize..=6, sigma in 0.05..0.7f64, seed in any::<u64>(), sp in 0.1..0.9f64) {
        let d0 = near_identity(k, sigma, seed);
        let g = gram(&d0).unwrap();
        let model = SparsityModel::BG(sp);
        let v = population_verdict(&g, model, Method::ExactDual).unwrap();
        prop_assume!(v.status == Status::Identifiable && v.margin > 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let a = random_tangent_direction(&g, &mut rng);
            prop_assert!(directional_derivative(&g, model, &a, Side::Plus).unwrap() > 0.0);
            prop_assert!(directional_derivative(&g, model, &a, Side::Minus).unwrap() < 0.0);
        }
        prop_assert!(derivative_scale(k, model) > 0.0);
    }

    #[test]
    fn bernoulli_boundary_below_subset_boundary(k in 3usize..=12, s_frac in 0.0..1.0f64) {
        let s = 1 + ((s_frac * (k - 1) as f64) as usize).min(k - 2);
        let sg = l1dict::phase_boundary_constant_mu(k, SparsityModel::SG(s)).unwrap();
        let bg = l1dict::phase_boundary_constant_mu(k, SparsityModel::BG(s as f64 / k as f64)).unwrap();
        prop_assert!(bg <= sg + 1e-12, "K={k} s={s}: {bg} > {sg}");
    }

    #[test]
    fn probability_formulas_monotone(eps in 0.01..0.5f64, n in 1u64..1_000_000, mu in 0.01..0.9f64, p in 0.05..1.0f64, k in 2.0..40.0f64) {
        let n2 = n * 2;
        prop_assert!(p1(eps, n2, mu, k).unwrap() < p1(eps, n, mu, k).unwrap() || p1(eps, n, mu, k).unwrap() == 0.0);
        prop_assert!(p2(eps, n2, p, k).unwrap() <= p2(eps, n, p, k).unwrap());
        prop_assert!(p3(eps, n2, p, k).unwrap() <= p3(eps, n, p, k).unwrap());
        prop_assert!(p1(eps, n, mu, k).unwrap() <= p1(eps, n, mu * 1.1, k).unwrap());
        prop_assert!(p1(eps, n, mu, k).unwrap() <= p1(eps, n, mu, k + 1.0).unwrap());
        prop_assert!(p2(eps, n, p, k).unwrap() <= p2(eps, n, p, k + 1.0).unwrap());
        prop_assert!(p3(eps, n, p, k).unwrap() <= p3(eps, n, p, k + 1.0).unwrap());
        prop_assert!(p3(eps, n, (p * 1.1).min(1.0), k).unwrap() <= p3(eps, n, p, k).unwrap());
    }

    #[test]
    fn report_probability_clamped_and_nondecreasing(k in 2usize..=8, mu in 0.0..0.3f64, p in 0.1..0.9f64, eps in 0.02..0.3f64) {
        let g = constant_mu_gram(k, mu).unwrap();
        let mut last = 0.0;
        for e in 1..=9 {
            let r = finite_sample_report(&g, SparsityModel::BG(p), eps, 10u64.pow(e), Method::ExactDual).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.prob_lower_bound));
            prop_assert!(r.prob_lower_bound >= last);
            last = r.prob_lower_bound;
        }
    }

    #[test]
    fn sufficient_side_never_tighter(k in 2usize..=10, eps in 0.05..0.5f64, n in 1000u64..100_000_000, mu in 0.01..0.5f64, p in 0.05..0.95f64) {
        let kf = k as f64;
        let kp = kf + 2.0 / p;
        let sum = p1(eps, n, mu, kp).unwrap() + p2(eps, n, p, kp).unwrap() + p3(eps, n, p, kf).unwrap();
        prop_assert!(1.0 - kf * kf * sum <= 1.0 - kf * sum);
    }

    #[test]
    fn tangent_projection_and_retraction(k in 2usize..=8, seed in any::<u64>()) {
        let d = dictionary(k, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gt = project_tangent(d.matrix(), &g);
        for c in 0..k {
            prop_assert!(d.matrix().column(c).dot(&gt.column(c)).abs() < 1e-12);
        }
        let step = Dictionary::normalized(d.matrix() - &gt * 0.1).unwrap();
        for c in 0..k {
            prop_assert!((step.matrix().column(c).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn objectives_invariant_under_signed_permutation(k in 2usize..=6, seed in any::<u64>(), p in 0.1..0.9f64) {
        let (d0, d) = (dictionary(k, seed), dictionary(k, seed ^ 3));
        let sp = signed_permutation(k, seed ^ 5);
        let dp = d.apply(&sp).unwrap();
        let b = generate_signals(&d0, SparsityModel::BG(p), 200, seed).unwrap();
        let (x, y) = (empirical_objective(&d, &b).unwrap(), empirical_objective(&dp, &b).unwrap());
        prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x));
        let (x, y) = (population_objective(&d, &d0, SparsityModel::BG(p)).unwrap(), population_objective(&dp, &d0, SparsityModel::BG(p)).unwrap());
        prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn empirical_near_population(k in 2usize..=6, seed in any::<u64>(), sp in 0.1..0.9f64) {
        let d0 = dictionary(k, seed);
        let d = Dictionary::normalized(d0.matrix() + DMatrix::from_fn(k, k, |i, j| 0.05 * ((i * 7 + j * 3 + seed as usize % 11) as f64).sin())).unwrap();
        let model = SparsityModel::BG(sp);
        let n = 20_000;
        let b = generate_signals(&d0, model, n, seed).unwrap();
        let w = d.inverse().unwrap();
        let vals: Vec<f64> = b.signals.column_iter().map(|x| (&w * x).iter().map(|v| v.abs()).sum()).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        prop_assert!((empirical_objective(&d, &b).unwrap() - mean).abs() < 1e-10 * (1.0 + mean));
        let pop = population_objective(&d, &d0, model).unwrap();
        prop_assert!((mean - pop).abs() <= 4.0 * sd / (n as f64).sqrt(), "{mean} vs {pop}");
    }
}

#[test]
fn subset_dual_can_stay_flat_with_two_nonzeros() {
    // |||w|||_2 ≥ (8|w1| + 8|w2| + |w1|)/9 ≥ w1 + w2/2 at m = 10, so the k = 2 dual equals ‖z‖∞
    let mut z = vec![0.0; 10];
    z[0] = 1.0;
    z[1] = 0.5;
    let d1 = dual_norm_exact(&z, GroupNormParam::Subset(1), 1e-10).unwrap();
    let d2 = dual_norm_exact(&z, GroupNormParam::Subset(2), 1e-10).unwrap();
    assert!((d1.value - 1.0).abs() < 1e-9);
    assert!((d2.value - 1.0).abs() < 1e-9, "{}", d2.value);
}

#[test]
fn descent_from_identifiable_reference_stays_close() {
    let m0: GramMatrix = constant_mu_gram(6, 0.1).unwrap();
    let model = SparsityModel::SG(2);
    let v = population_verdict(&m0, model, Method::ExactDual).unwrap();
    assert!(v.margin > 0.05);
    let d0 = Dictionary::from_gram(&m0).unwrap();
    for seed in 0..3 {
        let b = generate_signals(&d0, model, 2000, seed).unwrap();
        let cfg = DescentConfig { max_iters: 1000, ..DescentConfig::default() };
        let tr = manifold_descent(&d0, &b, &cfg, &d0).unwrap();
        assert!(tr.final_error <= 1e-2, "seed {seed}: {}", tr.final_error);
        assert!(tr.objective_history.windows(2).all(|w| w[1] <= w[0]));
    }
}
