//! The two-level model used throughout: basis `|+⟩ = e₀`, `|−⟩ = e₁`,
//! `Â = |+⟩⟨−| + |−⟩⟨+|`, `B̂ = |+⟩⟨+| − |−⟩⟨−|`.

use crate::linalg::{c, CMatrix, DensityState, HermitianObservable};
use crate::quasiprob::Schedule;

pub fn observable_a() -> HermitianObservable {
    HermitianObservable::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).expect("Pauli x")
}

pub fn observable_b() -> HermitianObservable {
    HermitianObservable::from_real_rows(2, &[1.0, 0.0, 0.0, -1.0]).expect("Pauli z")
}

/// `ωi(|−⟩⟨+| − |+⟩⟨−|)`, which rotates `Â` into `B̂` after `t = π/(4ω)`.
pub fn alternating_hamiltonian(omega: f64) -> HermitianObservable {
    let m = CMatrix::from_fn(2, 2, |i, j| match (i, j) {
        (1, 0) => c(0.0, omega),
        (0, 1) => c(0.0, -omega),
        _ => c(0.0, 0.0),
    });
    HermitianObservable::new(m).expect("Hermitian by construction")
}

pub fn plus_state() -> DensityState {
    DensityState::from_pure(&[c(1.0, 0.0), c(0.0, 0.0)]).expect("valid state")
}

pub fn minus_state() -> DensityState {
    DensityState::from_pure(&[c(0.0, 0.0), c(1.0, 0.0)]).expect("valid state")
}

/// Registry `[Â, B̂]` observed in the given order (0 = `Â`, 1 = `B̂`).
pub fn ab_schedule(order: &[usize]) -> Schedule {
    Schedule::sequence(vec![observable_a(), observable_b()], order).expect("valid schedule")
}

/// First `Â`, then `B̂`.
pub fn table1_schedule() -> Schedule {
    ab_schedule(&[0, 1])
}
