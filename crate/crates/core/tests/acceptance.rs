//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use qreal::linalg::C64;
use qreal::models;
use qreal::moments::{
    add_gaussian_noise, calibrate_gaussian_noise, cauchy_schwarz_check, combine_independent,
    cumulants_to_moments, expectation_of_polynomial, gaussian_cumulants, moment_matrix, moments_of_atoms,
    moments_of_quasi, moments_to_cumulants, psd_check, table1_probe, CalibrationOptions, MomentTable,
    MultiIndex, Polynomial, PSD_REL_TOL,
};
use qreal::noise::{
    delta_correlated_failure, density_eval, long_sequence_failure, noise_floor_estimate, positivity_decide,
    ConvolvedDensity, NoiseFactor, NoiseModel, PositivityOptions, Verdict,
};
use qreal::quasiprob::{marginalize, q_correlator, quasi_distribution, MemoryKernel, QuasiDistribution, QuasiOptions};
use qreal::weakmeas::{joint_moments, weak_limit, GaussianDetector, DEFAULT_ETAS};
use qreal::Exec;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn table1_q() -> QuasiDistribution {
    quasi_distribution(&models::plus_state(), &models::table1_schedule(), QuasiOptions::default()).unwrap()
}

fn table1_m(k: u32) -> MomentTable {
    moments_of_quasi(&table1_q(), k).unwrap()
}

const TABLE1: [((f64, f64), f64); 6] = [
    ((-1.0, -1.0), 0.25),
    ((0.0, -1.0), -0.5),
    ((1.0, -1.0), 0.25),
    ((-1.0, 1.0), 0.25),
    ((0.0, 1.0), 0.5),
    ((1.0, 1.0), 0.25),
];

fn criterion_1() -> Outcome {
    let q = table1_q();
    let mut worst: f64 = 0.0;
    for ((a, b), w) in TABLE1 {
        worst = worst.max((q.weight(&[a, b]) - w).abs());
    }
    ensure(q.len() == 6, format!("{} atoms", q.len()))?;
    ensure(worst < 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("six entries, max deviation {worst:.1e}; Q(0,-1) = {}", q.weight(&[0.0, -1.0])))
}

fn criterion_2() -> Outcome {
    let q = table1_q();
    let gauss = |alpha: f64, x: f64| (alpha / std::f64::consts::PI).sqrt() * (-alpha * x * x).exp();
    let laplace = |alpha: f64, x: f64| 0.5 * alpha * (-alpha * x.abs()).exp();
    let mut r = common::rng(2024);
    let mut worst: f64 = 0.0;
    for (model, n_a, n_b) in [
        (NoiseModel::gaussian_exponents(&[1.0, 0.6]), 1.0, 0.6),
        (NoiseModel::LaplaceProduct { rates: vec![0.5, 1.7] }, 0.5, 1.7),
    ] {
        let is_gauss = matches!(model, NoiseModel::GaussianProduct { .. });
        let n = |alpha: f64, x: f64| if is_gauss { gauss(alpha, x) } else { laplace(alpha, x) };
        let p = ConvolvedDensity::new(q.clone(), model).unwrap();
        for _ in 0..100 {
            let (a, b) = (r.gen_range(-4.0..4.0), r.gen_range(-4.0..4.0));
            let six: f64 = TABLE1.iter().map(|((qa, qb), w)| w * n(n_a, a - qa) * n(n_b, b - qb)).sum();
            let v = density_eval(&p, &[a, b]).unwrap().value().unwrap();
            worst = worst.max((v - six).abs());
        }
    }
    ensure(worst < 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("200 points (Gaussian and Laplace), max deviation {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let q = table1_q();
    let g = positivity_decide(
        &ConvolvedDensity::new(q.clone(), NoiseModel::gaussian_exponents(&[1.0, 1.0])).unwrap(),
        PositivityOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(g.verdict == Verdict::NegativeWitness, "Gaussian noise: no witness")?;
    let w = g.witness.clone().unwrap();
    ensure(w.point[0] == 0.0 && w.point[1] < 0.0 && w.value < 0.0, format!("witness {:?}", w.point))?;
    let l = positivity_decide(
        &ConvolvedDensity::new(q, NoiseModel::LaplaceProduct { rates: vec![0.1, 0.1] }).unwrap(),
        PositivityOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(l.verdict == Verdict::PositiveOnDecisionSet, "Laplace noise: witness found")?;
    Ok(format!(
        "Gaussian witness ({}, {:.6}) with P = {:.6e}; Laplace positive over {} regions",
        w.point[0],
        w.point[1],
        w.value,
        l.regions_checked.len()
    ))
}

fn criterion_4() -> Outcome {
    let r = long_sequence_failure(64, &NoiseModel::LaplaceProduct { rates: vec![0.5, 0.5] }).map_err(|e| e.to_string())?;
    let n = r.n_fail.ok_or("no failing length up to 64")?;
    let v = r.value.unwrap();
    ensure(v < 0.0, "value not negative")?;
    let d = delta_correlated_failure(
        &models::minus_state(),
        NoiseFactor::Laplace { rate: 1.0 },
        NoiseFactor::Laplace { rate: 1.0 },
    )
    .map_err(|e| e.to_string())?;
    let p = d.witness.ok_or("delta-correlated: no negative point")?;
    let b = p[0] + 1.0;
    ensure((p[2] - (b + 1.0)).abs() < 1e-12, format!("witness {p:?} not of the form (b-1, a0, b+1)"))?;
    Ok(format!("n_fail = {n} with P = {v:.6e}; delta-correlated witness {p:?} with P = {:.6e}", d.value.unwrap()))
}

fn criterion_5() -> Outcome {
    let mut r = common::rng(55);
    let mut worst_id: f64 = 0.0;
    let mut worst_rt: f64 = 0.0;
    let mut worst_add: f64 = 0.0;
    for n in 1..=3usize {
        for k in 2..=8u32 {
            for _ in 0..10 {
                let atoms: Vec<(Vec<f64>, f64)> = (0..6)
                    .map(|_| ((0..n).map(|_| r.gen_range(-1.0..1.0)).collect(), r.gen_range(0.05..1.0)))
                    .collect();
                let total: f64 = atoms.iter().map(|(_, w)| w).sum();
                let atoms: Vec<_> = atoms.into_iter().map(|(x, w)| (x, w / total)).collect();
                let m = moments_of_atoms(n, k, &atoms);
                let c = moments_to_cumulants(&m).unwrap();
                let e1 = MultiIndex::unit(n, 0);
                let e2 = e1.add(&e1);
                worst_id = worst_id.max((c.get(&e1).unwrap() - m.get(&e1).unwrap()).abs());
                worst_id = worst_id
                    .max((m.get(&e2).unwrap() - c.get(&e1).unwrap().powi(2) - c.get(&e2).unwrap()).abs());
                if n >= 2 {
                    let (a, b) = (MultiIndex::unit(n, 0), MultiIndex::unit(n, 1));
                    let ab = a.add(&b);
                    let rhs = c.get(&a).unwrap() * c.get(&b).unwrap() + c.get(&ab).unwrap();
                    worst_id = worst_id.max((m.get(&ab).unwrap() - rhs).abs());
                }
                worst_rt = worst_rt.max(cumulants_to_moments(&c).unwrap().max_abs_difference(&m));

                // Moments of the sum from the binomial convolution formula.
                let variances: Vec<f64> = (0..n).map(|_| r.gen_range(0.1..1.0)).collect();
                let cn = gaussian_cumulants(&variances, k);
                let mn = cumulants_to_moments(&cn).unwrap();
                let mp = cumulants_to_moments(&combine_independent(&c, &cn).unwrap()).unwrap();
                for (alpha, v) in mp.iter() {
                    let conv: f64 = alpha
                        .divisors()
                        .iter()
                        .map(|beta| {
                            alpha.binomial(beta) * m.get(beta).unwrap() * mn.get(&alpha.checked_sub(beta).unwrap()).unwrap()
                        })
                        .sum();
                    worst_add = worst_add.max((v - conv).abs());
                }
            }
        }
    }
    ensure(worst_id < 1e-12, format!("identities off by {worst_id:e}"))?;
    ensure(worst_rt < 1e-12, format!("roundtrip residual {worst_rt:e}"))?;
    ensure(worst_add < 1e-12, format!("additivity off by {worst_add:e}"))?;
    Ok(format!("identities {worst_id:.1e}, roundtrip {worst_rt:.1e}, additivity {worst_add:.1e} over 210 tables"))
}

fn criterion_6() -> Outcome {
    let m = table1_m(6);
    let check = psd_check(&moment_matrix(&m, 3).unwrap(), PSD_REL_TOL);
    ensure(!check.is_psd, "degree-3 moment matrix is PSD")?;
    let e = expectation_of_polynomial(&m, &table1_probe().pow(2)).unwrap();
    ensure((e + 0.5).abs() < 1e-12, format!("square has expectation {e}"))?;
    Ok(format!("min eigenvalue {:.6e}; <[(1-a^2)(1-b)/2]^2> = {e}", check.min_eigenvalue))
}

fn criterion_7() -> Outcome {
    let m = table1_m(6);
    let r = calibrate_gaussian_noise(&m, 3, 1e-6, &CalibrationOptions::default()).map_err(|e| e.to_string())?;
    let (lo, hi) = r.bracket;
    ensure(r.variance > 0.0 && hi - lo <= 1e-6, format!("bracket {lo}..{hi}"))?;
    let at = |v: f64| psd_check(&moment_matrix(&add_gaussian_noise(&m, &[v, v]).unwrap(), 3).unwrap(), PSD_REL_TOL);
    let (up, down) = (at(hi), at(lo));
    ensure(up.min_eigenvalue >= -PSD_REL_TOL * up.trace, format!("min eigenvalue {} at v*+", up.min_eigenvalue))?;
    ensure(down.min_eigenvalue < 0.0, format!("min eigenvalue {} at v*-", down.min_eigenvalue))?;
    Ok(format!(
        "v* = {hi:.9} ({}), width {:.1e}, min eigenvalue {:.2e} at v*+ and {:.2e} at v*-",
        r.method,
        hi - lo,
        up.min_eigenvalue,
        down.min_eigenvalue
    ))
}

fn criterion_8() -> Outcome {
    let m = table1_m(6);
    let u = table1_probe();
    let one = Polynomial::constant(2, 1.0);
    let raw = cauchy_schwarz_check(&m, &u, &one).unwrap();
    ensure(raw.violated, "two-step moments pass Cauchy-Schwarz")?;
    let cal = calibrate_gaussian_noise(&m, 3, 1e-6, &CalibrationOptions::default()).map_err(|e| e.to_string())?;
    let noisy = add_gaussian_noise(&m, &[cal.variance, cal.variance]).unwrap();
    let after = cauchy_schwarz_check(&noisy, &u, &one).unwrap();
    ensure(!after.violated, format!("violated after noise: {} > {}", after.lhs, after.rhs))?;
    let mut r = common::rng(88);
    for trial in 0..50 {
        let atoms: Vec<(Vec<f64>, f64)> = (0..8)
            .map(|_| (vec![r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)], r.gen_range(0.0..1.0)))
            .collect();
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        let atoms: Vec<_> = atoms.into_iter().map(|(x, w)| (x, w / total)).collect();
        let mt = moments_of_atoms(2, 6, &atoms);
        let rand_poly = |r: &mut rand_chacha::ChaCha8Rng| {
            let mut p = Polynomial::zero(2);
            for e in qreal::moments::multi_indices(2, 3) {
                p.add_term(e, r.gen_range(-1.0..1.0));
            }
            p
        };
        let (pu, pv) = (rand_poly(&mut r), rand_poly(&mut r));
        let cs = cauchy_schwarz_check(&mt, &pu, &pv).unwrap();
        ensure(!cs.violated, format!("probability distribution {trial} violates: {} > {}", cs.lhs, cs.rhs))?;
    }
    Ok(format!(
        "two-step: lhs {:.3} > rhs {:.3}; with v* = {:.6}: lhs {:.4} <= rhs {:.4}; 50 probability distributions clean",
        raw.lhs, raw.rhs, cal.variance, after.lhs, after.rhs
    ))
}

fn criterion_9() -> Outcome {
    // Closed-form normalization and a quadrature check of Σ∫K†K.
    let mut worst_norm: f64 = 0.0;
    let nodes = common::gauss_hermite(64);
    for &eta in &[0.5, 0.2, 0.1, 0.05] {
        let det = GaussianDetector::new(eta).unwrap();
        let s = std::f64::consts::SQRT_2 * det.variance().sqrt();
        let obs = models::observable_a();
        let mut sum = qreal::linalg::CMatrix::zeros(2, 2);
        for &(x, w) in &nodes {
            let k = det.kraus_operator(&obs, s * x);
            sum += (k.adjoint() * &k) * C64::new(w * (x * x).exp() * s, 0.0);
        }
        worst_norm = worst_norm.max(qreal::linalg::max_abs(&(sum - qreal::linalg::CMatrix::identity(2, 2))));
    }
    ensure(worst_norm < 1e-9, format!("normalization off by {worst_norm:e}"))?;

    let single = models::ab_schedule(&[0]);
    let rho = models::plus_state();
    let offsets: Vec<f64> = DEFAULT_ETAS
        .iter()
        .map(|&eta| joint_moments(&rho, &single, eta, &[0, 0]).unwrap() - 0.25 / (eta * eta))
        .collect();
    let spread = offsets.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - offsets.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    ensure(spread < 1e-9, format!("detection offset varies by {spread:e}"))?;

    let schedule = models::table1_schedule();
    let mut lines = Vec::new();
    for (name, sel) in [("<ab>", vec![0usize, 1]), ("<b>", vec![1])] {
        let r = weak_limit(&rho, &schedule, &sel, &DEFAULT_ETAS, Exec::default()).map_err(|e| e.to_string())?;
        ensure(r.discrepancy < 1e-6, format!("{name}: discrepancy {:e}", r.discrepancy))?;
        ensure(r.converged, format!("{name}: flagged {:?}", r.flag))?;
        match r.fitted_order {
            Some(p) => {
                ensure((1.7..=2.3).contains(&p), format!("{name}: fitted order {p}"))?;
                lines.push(format!("{name} -> {:.3e} (ref {}, order {p:.3})", r.extrapolated, r.reference));
            }
            None => {
                let max_res = r.values.iter().map(|v| (v - r.reference).abs()).fold(0.0, f64::max);
                ensure(max_res <= 1e-15, format!("{name}: no order but residual {max_res:e}"))?;
                lines.push(format!("{name} -> {:.3e} (ref {}, equal to the reference at every eta)", r.extrapolated, r.reference));
            }
        }
    }
    Ok(format!("normalization {worst_norm:.1e}, offset spread {spread:.1e}; {}", lines.join("; ")))
}

fn criterion_10() -> Outcome {
    let mut r = common::rng(1010);
    let mut worst_marg: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    for _ in 0..50 {
        let d = r.gen_range(2..=3);
        let n = r.gen_range(1..=5);
        let state = common::random_state(&mut r, d);
        let schedule = common::random_schedule(&mut r, d, n);
        let q = quasi_distribution(&state, &schedule, QuasiOptions::default()).unwrap();
        for k in 0..n {
            let direct = quasi_distribution(&state, &schedule.without_step(k).unwrap(), QuasiOptions::default()).unwrap();
            worst_marg = worst_marg.max(marginalize(&q, k).unwrap().max_abs_difference(&direct));
        }
        let f: BTreeMap<i64, f64> = (-3..=3).map(|lag| (lag, r.gen_range(-2.0..2.0))).collect();
        for s in 0..n {
            let a = q_correlator(&state, &schedule, &MemoryKernel::markovian(), &[s]).unwrap();
            let b = q_correlator(&state, &schedule, &MemoryKernel::with_f(f.clone()), &[s]).unwrap();
            worst_f = worst_f.max((a - b).abs());
        }
    }
    ensure(worst_marg < 1e-10, format!("marginals off by {worst_marg:e}"))?;
    ensure(worst_f < 1e-12, format!("single averages depend on f by {worst_f:e}"))?;
    Ok(format!("50 schedules: marginal residual {worst_marg:.1e}, memory-kernel effect {worst_f:.1e}"))
}

fn criterion_11() -> Outcome {
    let e = noise_floor_estimate(1e20, 1e-3, 0.1, 1e-10, 1e-7).map_err(|e| e.to_string())?;
    let within = |x: f64, target: f64| x / target <= 3.0 && target / x <= 3.0;
    ensure(within(e.n_macro, 3e41), format!("n_macro = {:e}", e.n_macro))?;
    ensure(within(e.n_micro, 1e37), format!("n_micro = {:e}", e.n_micro))?;
    Ok(format!("n_macro = {:.3e}, n_micro = {:.3e} e^2/m^4", e.n_macro, e.n_micro))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("two-step quasiprobability exactness", criterion_1),
        ("six-term convolution structure", criterion_2),
        ("Gaussian failure, Laplace positivity", criterion_3),
        ("long-sequence and delta-correlated failure", criterion_4),
        ("moment calculus", criterion_5),
        ("negativity certificate", criterion_6),
        ("calibration", criterion_7),
        ("Cauchy-Schwarz", criterion_8),
        ("weak limit", criterion_9),
        ("noninvasiveness", criterion_10),
        ("noise floor", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
