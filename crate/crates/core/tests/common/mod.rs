#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use qreal::linalg::{c, CMatrix, DensityState, HermitianObservable};
use qreal::quasiprob::{Schedule, Step};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_hermitian(rng: &mut impl Rng, d: usize) -> HermitianObservable {
    let a = CMatrix::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    HermitianObservable::new((&a + a.adjoint()) * c(0.5, 0.0)).unwrap()
}

pub fn random_state(rng: &mut impl Rng, d: usize) -> DensityState {
    let a = CMatrix::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let m = &a * a.adjoint();
    let t = m.trace();
    DensityState::new(m / t).unwrap()
}

/// Random registry of 1–3 observables, `n` steps, optional Hamiltonian and
/// integer-spaced times.
pub fn random_schedule(rng: &mut impl Rng, d: usize, n: usize) -> Schedule {
    let registry: Vec<HermitianObservable> = (0..rng.gen_range(1..=3)).map(|_| random_hermitian(rng, d)).collect();
    let hamiltonian = rng.gen_bool(0.5).then(|| random_hermitian(rng, d));
    let mut t = 0.0;
    let steps = (0..n)
        .map(|_| {
            t += f64::from(rng.gen_range(0..3u8)) * 0.5;
            Step { observable: rng.gen_range(0..registry.len()), time: t }
        })
        .collect();
    Schedule::new(registry, steps, hamiltonian).unwrap()
}

/// Gauss–Hermite nodes and weights for `∫ e^{−x²} f(x) dx` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let j = DMatrix::from_fn(n, n, |i, k| if i + 1 == k || k + 1 == i { (i.max(k) as f64 / 2.0).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(j);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}
