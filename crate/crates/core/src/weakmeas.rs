//! Finite-strength Gaussian measurements and their noninvasive limit.
//!
//! The Kraus operator `K̂_η(a) = C Σᵢ e^{−η²(λᵢ−a)²} Π̂ᵢ` acts on `X` as
//! `Σ_{ij} C² e^{−η²[(λᵢ−a)²+(λⱼ−a)²]} Π̂ᵢ X Π̂ⱼ`. Completing the square gives
//! a Gaussian in `a` centered at `(λᵢ+λⱼ)/2` with variance `1/(4η²)`, times
//! the damping `e^{−η²(λᵢ−λⱼ)²/2}`.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::linalg::{self, CMatrix, DensityState, HermitianObservable, C64};
use crate::quasiprob::{q_correlator, DeltaFamily, MemoryKernel, Schedule, DEFAULT_ATOM_LIMIT, PRUNE_TOL};

pub const MAX_MOMENT_DEGREE: usize = 6;
pub const DEFAULT_ETAS: [f64; 3] = [0.1, 0.05, 0.025];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianDetector {
    pub eta: f64,
}

impl GaussianDetector {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::validation(format!("measurement strength must be positive, got {eta}")));
        }
        Ok(Self { eta })
    }

    /// Variance of the outcome around each branch mean.
    pub fn variance(&self) -> f64 {
        0.25 / (self.eta * self.eta)
    }

    /// `C²` with `∫da K̂†K̂ = 1`.
    pub fn normalization(&self) -> f64 {
        self.eta * (2.0 / std::f64::consts::PI).sqrt()
    }

    /// `K̂_η(a)` as a matrix.
    pub fn kraus_operator(&self, obs: &HermitianObservable, a: f64) -> CMatrix {
        let spec = linalg::decompose(obs.matrix(), 0.0);
        let c = self.normalization().sqrt();
        spec.eigenvalues.iter().zip(&spec.projectors).fold(CMatrix::zeros(obs.dim(), obs.dim()), |acc, (l, p)| {
            acc + p * C64::new(c * (-(self.eta * (l - a)).powi(2)).exp(), 0.0)
        })
    }
}

/// One term of `K̂ X K̂†`: the outcome is Gaussian around `mean`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausBranch {
    pub mean: f64,
    pub operator: CMatrix,
}

/// `∫ K̂_η(a) X K̂_η(a)† · (…) da` grouped by Gaussian center.
pub fn kraus_step(x: &CMatrix, obs: &HermitianObservable, detector: GaussianDetector) -> Result<Vec<KrausBranch>> {
    if x.nrows() != obs.dim() || x.ncols() != obs.dim() {
        return Err(Error::DimensionMismatch { expected: obs.dim(), found: x.nrows() });
    }
    let family = DeltaFamily::new(obs);
    Ok((0..family.values.len())
        .map(|k| KrausBranch { mean: family.values[k], operator: damped_project(&family, k, x, detector.eta) })
        .collect())
}

fn damped_project(family: &DeltaFamily, k: usize, x: &CMatrix, eta: f64) -> CMatrix {
    let d = x.nrows();
    let mut out = CMatrix::zeros(d, d);
    for &(i, j) in &family.pairs[k] {
        let gap = family.eigenvalues[i] - family.eigenvalues[j];
        let damp = (-0.5 * eta * eta * gap * gap).exp();
        out += (&family.projectors[i] * x * &family.projectors[j]) * C64::new(damp, 0.0);
    }
    out
}

/// Outcome distribution of a full sequence: independent Gaussians of common
/// variance around each branch's means, with real branch weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchMixture {
    pub variance: f64,
    pub branches: Vec<(Vec<f64>, f64)>,
}

impl BranchMixture {
    pub fn total_weight(&self) -> f64 {
        self.branches.iter().map(|(_, w)| w).sum()
    }

    /// `E[Π a_s]` over the selection (repeats raise powers).
    pub fn moment(&self, selection: &[usize]) -> f64 {
        let n = self.branches.first().map_or(0, |(m, _)| m.len());
        let mut powers = vec![0usize; n];
        for &s in selection {
            powers[s] += 1;
        }
        self.branches
            .iter()
            .map(|(means, w)| {
                w * powers.iter().zip(means).map(|(&k, &mu)| gaussian_raw_moment(mu, self.variance, k)).product::<f64>()
            })
            .sum()
    }

    /// Mixture density at an outcome tuple.
    pub fn density(&self, a: &[f64]) -> f64 {
        let norm = (2.0 * std::f64::consts::PI * self.variance).sqrt();
        self.branches
            .iter()
            .map(|(means, w)| {
                w * means
                    .iter()
                    .zip(a)
                    .map(|(mu, x)| (-(x - mu).powi(2) / (2.0 * self.variance)).exp() / norm)
                    .product::<f64>()
            })
            .sum()
    }
}

/// `E[X^k]` for `X ~ N(μ, σ²)`.
pub fn gaussian_raw_moment(mu: f64, var: f64, k: usize) -> f64 {
    let (mut prev, mut cur) = (1.0, mu);
    match k {
        0 => 1.0,
        _ => {
            for j in 2..=k {
                let next = mu * cur + (j - 1) as f64 * var * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Expand the whole Markovian sequence at strength `eta`.
pub fn branch_mixture(state: &DensityState, schedule: &Schedule, eta: f64, exec: Exec) -> Result<BranchMixture> {
    let detector = GaussianDetector::new(eta)?;
    if state.dim() != schedule.dim() {
        return Err(Error::DimensionMismatch { expected: schedule.dim(), found: state.dim() });
    }
    let families: Vec<DeltaFamily> = schedule.evolved_observables()?.iter().map(DeltaFamily::new).collect();
    if families.is_empty() {
        return Ok(BranchMixture { variance: detector.variance(), branches: vec![(Vec::new(), 1.0)] });
    }
    let visited = AtomicUsize::new(0);
    let parts = exec::map_range(exec, families[0].values.len(), |k| {
        let mut out = Vec::new();
        let mut means = Vec::with_capacity(families.len());
        expand(&families, eta, &visited, 0, k, state.matrix(), &mut means, &mut out)?;
        Ok::<_, Error>(out)
    });
    let mut branches = Vec::new();
    for p in parts {
        branches.extend(p?);
    }
    Ok(BranchMixture { variance: detector.variance(), branches })
}

#[allow(clippy::too_many_arguments)]
fn expand(
    families: &[DeltaFamily],
    eta: f64,
    visited: &AtomicUsize,
    step: usize,
    k: usize,
    x: &CMatrix,
    means: &mut Vec<f64>,
    out: &mut Vec<(Vec<f64>, f64)>,
) -> Result<()> {
    if visited.fetch_add(1, Ordering::Relaxed) >= DEFAULT_ATOM_LIMIT {
        return Err(Error::ResourceLimit { what: "Kraus branch enumeration".into(), bound: DEFAULT_ATOM_LIMIT });
    }
    let family = &families[step];
    means.push(family.values[k]);
    if step + 1 == families.len() {
        // Off-diagonal pairs vanish under the trace.
        let w = family.traced(k, x);
        if w.abs() >= PRUNE_TOL {
            out.push((means.clone(), w));
        }
    } else {
        let y = damped_project(family, k, x, eta);
        if linalg::max_abs(&y) >= PRUNE_TOL {
            for next in 0..families[step + 1].values.len() {
                expand(families, eta, visited, step + 1, next, &y, means, out)?;
            }
        }
    }
    means.pop();
    Ok(())
}

/// `⟨Π_{s ∈ selection} a_s⟩_η`, selection entries may repeat.
pub fn joint_moments(state: &DensityState, schedule: &Schedule, eta: f64, selection: &[usize]) -> Result<f64> {
    check_selection(schedule, selection)?;
    Ok(branch_mixture(state, schedule, eta, Exec::default())?.moment(selection))
}

fn check_selection(schedule: &Schedule, selection: &[usize]) -> Result<()> {
    if selection.len() > MAX_MOMENT_DEGREE {
        return Err(Error::DegreeOverflow { degree: selection.len() as u32, max: MAX_MOMENT_DEGREE as u32 });
    }
    if let Some(&s) = selection.iter().find(|&&s| s >= schedule.len()) {
        return Err(Error::validation(format!("selection refers to missing step {s}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    pub selection: Vec<usize>,
    pub eta_list: Vec<f64>,
    pub values: Vec<f64>,
    pub extrapolated: f64,
    pub reference: f64,
    pub discrepancy: f64,
    /// Slope of `ln|value − reference|` against `ln η`; absent when the
    /// finite-strength values already equal the reference.
    pub fitted_order: Option<f64>,
    pub converged: bool,
    pub flag: Option<String>,
}

impl ExtrapolationReport {
    /// Rows `eta,value` followed by a summary block.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eta,value\n");
        for (e, v) in self.eta_list.iter().zip(&self.values) {
            s.push_str(&format!("{e:.11e},{v:.11e}\n"));
        }
        s.push_str(&format!("extrapolated,{:.11e}\n", self.extrapolated));
        s.push_str(&format!("reference,{:.11e}\n", self.reference));
        s.push_str(&format!("discrepancy,{:.11e}\n", self.discrepancy));
        match self.fitted_order {
            Some(p) => s.push_str(&format!("fitted_order,{p:.11e}\n")),
            None => s.push_str("fitted_order,\n"),
        }
        s
    }
}

/// Neville evaluation at `x = 0` of the interpolant through `(xs, ys)`.
pub fn richardson_at_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (xs[i + m] * p[i] - xs[i] * p[i + 1]) / (xs[i + m] - xs[i]);
        }
    }
    p[0]
}

/// Extrapolate the finite-strength moment to `η → 0` in the variable `η²`
/// and compare with the Markovian quasiprobability correlator.
pub fn weak_limit(
    state: &DensityState,
    schedule: &Schedule,
    selection: &[usize],
    eta_list: &[f64],
    exec: Exec,
) -> Result<ExtrapolationReport> {
    check_selection(schedule, selection)?;
    if eta_list.len() < 3 {
        return Err(Error::validation("weak limit needs at least three strengths"));
    }
    if !eta_list.windows(2).all(|w| w[1] < w[0]) || eta_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::validation("strengths must be positive and strictly decreasing"));
    }
    let values = exec::map(exec, eta_list, |&eta| {
        branch_mixture(state, schedule, eta, Exec::Sequential).map(|m| m.moment(selection))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let xs: Vec<f64> = eta_list.iter().map(|e| e * e).collect();
    let extrapolated = richardson_at_zero(&xs, &values);
    let reference = q_correlator(state, schedule, &MemoryKernel::markovian(), selection)?;

    let residuals: Vec<f64> = values.iter().map(|v| (v - reference).abs()).collect();
    let scale = reference.abs().max(1.0);
    let (fitted_order, mut converged, mut flag) = if residuals.iter().all(|r| *r <= 1e-15 * scale) {
        (None, true, None)
    } else if residuals.iter().any(|r| *r <= 1e-15 * scale) {
        (None, true, Some("some residuals vanish; order not fitted".to_string()))
    } else {
        let lx: Vec<f64> = eta_list.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
        let order = least_squares_slope(&lx, &ly);
        let shrinking = residuals.windows(2).all(|w| w[1] < w[0]);
        (Some(order), shrinking, (!shrinking).then(|| "residual does not decrease with η".to_string()))
    };
    let discrepancy = (extrapolated - reference).abs();
    if !discrepancy.is_finite() {
        converged = false;
        flag = Some("extrapolation is not finite".into());
    }
    Ok(ExtrapolationReport {
        selection: selection.to_vec(),
        eta_list: eta_list.to_vec(),
        values,
        extrapolated,
        reference,
        discrepancy,
        fitted_order,
        converged,
        flag,
    })
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn raw_moments() {
        assert_eq!(gaussian_raw_moment(0.0, 1.0, 4), 3.0);
        assert_eq!(gaussian_raw_moment(2.0, 0.0, 3), 8.0);
        assert!((gaussian_raw_moment(1.0, 0.5, 2) - 1.5).abs() < 1e-15);
        assert!((gaussian_raw_moment(1.0, 0.5, 3) - (1.0 + 3.0 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn kraus_completeness_by_quadrature() {
        let obs = models::observable_a();
        let det = GaussianDetector::new(0.7).unwrap();
        let h = 0.01;
        let mut sum = CMatrix::zeros(2, 2);
        for k in -2000..=2000 {
            let kr = det.kraus_operator(&obs, k as f64 * h);
            sum += kr.adjoint() * &kr * C64::new(h, 0.0);
        }
        assert!(linalg::max_abs(&(sum - CMatrix::identity(2, 2))) < 1e-9);
    }

    #[test]
    fn identity_observable_single_branch() {
        let obs = HermitianObservable::identity(2).unwrap();
        let det = GaussianDetector::new(0.3).unwrap();
        let x = models::plus_state().matrix().clone();
        let b = kraus_step(&x, &obs, det).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b[0].mean - 1.0).abs() < 1e-14);
        assert!(linalg::max_abs(&(&b[0].operator - &x)) < 1e-14);
    }

    #[test]
    fn two_branch_mixture() {
        let sched = models::ab_schedule(&[1]);
        let mixed = DensityState::maximally_mixed(2).unwrap();
        let mix = branch_mixture(&mixed, &sched, 0.2, Exec::Sequential).unwrap();
        let mut br = mix.branches.clone();
        br.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        assert_eq!(br.len(), 2);
        assert!((br[0].0[0] + 1.0).abs() < 1e-14 && (br[0].1 - 0.5).abs() < 1e-14);
        assert!((br[1].0[0] - 1.0).abs() < 1e-14 && (br[1].1 - 0.5).abs() < 1e-14);
        assert!((mix.variance - 6.25).abs() < 1e-12);
    }

    #[test]
    fn detection_noise_offset() {
        let sched = models::ab_schedule(&[0]);
        let rho = models::plus_state();
        let mut offsets = Vec::new();
        for eta in [0.4, 0.2, 0.1, 0.05] {
            let a2 = joint_moments(&rho, &sched, eta, &[0, 0]).unwrap();
            offsets.push(a2 - 0.25 / (eta * eta));
            let a1 = joint_moments(&rho, &sched, eta, &[0]).unwrap();
            assert!(a1.abs() < 1e-14);
        }
        for o in &offsets {
            assert!((o - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn b_average_damping() {
        let rho = models::plus_state();
        let v = joint_moments(&rho, &models::table1_schedule(), 0.3, &[1]).unwrap();
        assert!((v - (-2.0f64 * 0.09).exp()).abs() < 1e-14);
    }

    #[test]
    fn richardson_exact_for_quadratics() {
        let xs = [0.04, 0.01, 0.0025];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x + 5.0 * x * x).collect();
        assert!((richardson_at_zero(&xs, &ys) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn weak_limit_validation() {
        let rho = models::plus_state();
        let s = models::table1_schedule();
        assert!(weak_limit(&rho, &s, &[1], &[0.1, 0.05], Exec::Sequential).is_err());
        assert!(weak_limit(&rho, &s, &[1], &[0.05, 0.1, 0.2], Exec::Sequential).is_err());
        assert!(weak_limit(&rho, &s, &[0, 0, 0, 0, 0, 0, 0], &DEFAULT_ETAS, Exec::Sequential).is_err());
    }

    #[test]
    fn commuting_case_is_eta_independent() {
        let rho = models::plus_state();
        let s = models::ab_schedule(&[1, 1]);
        let r = weak_limit(&rho, &s, &[0, 1], &DEFAULT_ETAS, Exec::Sequential).unwrap();
        for v in &r.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert_eq!(r.fitted_order, None);
    }
}
