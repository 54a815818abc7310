mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use qreal::moments::{
    combine_independent, cumulants_to_moments, moment_matrix, moments_of_atoms, moments_to_cumulants,
    multi_indices, positive_polynomial_catalog, psd_check, MomentTable, PSD_REL_TOL,
};
use rand::Rng;

fn random_atoms(r: &mut impl Rng, n: usize, count: usize, signed: bool) -> Vec<(Vec<f64>, f64)> {
    let mut atoms: Vec<(Vec<f64>, f64)> = (0..count)
        .map(|_| {
            let x = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
            let w = if signed { r.gen_range(-1.0..1.0) } else { r.gen_range(0.01..1.0) };
            (x, w)
        })
        .collect();
    let total: f64 = atoms.iter().map(|(_, w)| w).sum();
    if signed {
        // Shift the last weight so the total is exactly one.
        atoms.last_mut().unwrap().1 += 1.0 - total;
    } else {
        atoms.iter_mut().for_each(|(_, w)| *w /= total);
    }
    atoms
}

type Series = HashMap<Vec<u32>, f64>;

fn series_mul(a: &Series, b: &Series, k: u32) -> Series {
    let mut out = Series::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            if e.iter().sum::<u32>() <= k {
                *out.entry(e).or_insert(0.0) += ca * cb;
            }
        }
    }
    out
}

fn factorial_multi(e: &[u32]) -> f64 {
    e.iter().map(|&k| (1..=k).map(f64::from).product::<f64>()).product()
}

/// `ln(1 + u) = Σ (−1)^{j+1} u^j / j` on the exponential generating series.
fn log_series_cumulants(m: &MomentTable) -> Series {
    let n = m.variables();
    let k = m.max_degree();
    let u: Series = m
        .iter()
        .filter(|(a, _)| a.degree() > 0)
        .map(|(a, v)| (a.0.clone(), v / factorial_multi(&a.0)))
        .collect();
    let mut out = Series::new();
    let mut power = u.clone();
    for j in 1..=k {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        for (e, c) in &power {
            *out.entry(e.clone()).or_insert(0.0) += sign * c / f64::from(j);
        }
        power = series_mul(&power, &u, k);
    }
    out.insert(vec![0; n], 0.0);
    out.into_iter().map(|(e, c)| {
        let f = factorial_multi(&e);
        (e, c * f)
    }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cumulants_match_log_series(seed in any::<u64>(), n in 1usize..=3, k in 1u32..=6) {
        let mut r = common::rng(seed);
        let m = moments_of_atoms(n, k, &random_atoms(&mut r, n, 5, true));
        let c = moments_to_cumulants(&m).unwrap();
        let oracle = log_series_cumulants(&m);
        for (a, v) in c.iter() {
            let want = oracle.get(&a.0).copied().unwrap_or(0.0);
            prop_assert!((v - want).abs() < 1e-9 * want.abs().max(1.0), "{a}: {v} vs {want}");
        }
    }

    #[test]
    fn roundtrip(seed in any::<u64>(), n in 1usize..=3, k in 1u32..=8, signed in any::<bool>()) {
        let mut r = common::rng(seed);
        let m = moments_of_atoms(n, k, &random_atoms(&mut r, n, 6, signed));
        let c = moments_to_cumulants(&m).unwrap();
        let back = cumulants_to_moments(&c).unwrap();
        // Signed weights can make cumulants large; the bound scales with them.
        let big = c.iter().map(|(_, v)| v.abs()).fold(1.0, f64::max);
        let diff = back.max_abs_difference(&m);
        prop_assert!(diff < 1e-12 * big, "{diff} with cumulants up to {big}");
    }

    #[test]
    fn additivity_by_exact_convolution(seed in any::<u64>(), n in 1usize..=2) {
        let mut r = common::rng(seed);
        let x = random_atoms(&mut r, n, 4, true);
        let y = random_atoms(&mut r, n, 3, false);
        let z: Vec<(Vec<f64>, f64)> = x
            .iter()
            .flat_map(|(a, wa)| y.iter().map(move |(b, wb)| (a.iter().zip(b).map(|(p, q)| p + q).collect(), wa * wb)))
            .collect();
        let k = 6;
        let cx = moments_to_cumulants(&moments_of_atoms(n, k, &x)).unwrap();
        let cy = moments_to_cumulants(&moments_of_atoms(n, k, &y)).unwrap();
        let cz = moments_to_cumulants(&moments_of_atoms(n, k, &z)).unwrap();
        let big = cz.iter().map(|(_, v)| v.abs()).fold(1.0, f64::max);
        let diff = combine_independent(&cx, &cy).unwrap().max_abs_difference(&cz);
        prop_assert!(diff < 1e-12 * big, "{diff} with cumulants up to {big}");
    }

    #[test]
    fn nonnegative_distributions_are_psd(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = common::rng(seed);
        let m = moments_of_atoms(n, 6, &random_atoms(&mut r, n, 12, false));
        for d in 0..=3 {
            let check = psd_check(&moment_matrix(&m, d).unwrap(), PSD_REL_TOL);
            prop_assert!(check.is_psd, "D={d}: {}", check.min_eigenvalue);
        }
    }
}

#[test]
fn catalog_is_nonnegative_on_samples() {
    let mut r = common::rng(3);
    for (name, p) in positive_polynomial_catalog() {
        let n = p.variables;
        for _ in 0..1_000_000 {
            let x: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
            let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max).powi(6);
            assert!(p.eval(&x) >= -1e-12 * scale, "{name} at {x:?}");
        }
    }
}

#[test]
fn enumeration_counts() {
    for (n, k, want) in [(1, 8, 9), (2, 6, 28), (3, 8, 165)] {
        assert_eq!(multi_indices(n, k).len(), want);
    }
}
