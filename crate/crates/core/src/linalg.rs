//! Dense complex linear algebra for small systems.
//!
//! Operators are `d × d` complex matrices with `d ≤ MAX_DIM`. Superoperators
//! act on column-stacked operators: `vec(X)[i + d*j] = X[i, j]`, which is the
//! native storage order of [`nalgebra::DMatrix`]. With this convention
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Largest supported Hilbert-space dimension.
pub const MAX_DIM: usize = 8;
/// Entrywise tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative gap below which eigenvalues are merged into one level.
pub const DEGENERACY_REL_TOL: f64 = 1e-9;

const JACOBI_MAX_SWEEPS: usize = 100;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Build a matrix from row-major real entries.
pub fn real_matrix(d: usize, rows: &[f64]) -> CMatrix {
    assert_eq!(rows.len(), d * d);
    CMatrix::from_fn(d, d, |i, j| c(rows[i * d + j], 0.0))
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn check_finite(m: &CMatrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::validation(format!("entry ({i}, {j}) is not finite")));
            }
        }
    }
    Ok(())
}

fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    let d = m.nrows();
    if d == 0 {
        return Err(Error::validation("matrix has zero dimension"));
    }
    if d > MAX_DIM {
        return Err(Error::DimensionTooLarge(d));
    }
    Ok(d)
}

/// Returns the worst offending entry if `m` is not Hermitian within `tol`.
pub fn check_hermitian(m: &CMatrix, tol: f64) -> Result<()> {
    let d = check_square(m)?;
    check_finite(m)?;
    let mut worst: Option<(usize, usize, f64)> = None;
    for i in 0..d {
        for j in i..d {
            let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
            if dev > tol && worst.is_none_or(|w| dev > w.2) {
                worst = Some((i, j, dev));
            }
        }
    }
    match worst {
        Some((row, col, deviation)) => Err(Error::NotHermitian { row, col, deviation }),
        None => Ok(()),
    }
}

fn symmetrized(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// A Hermitian operator `Â` of dimension at most [`MAX_DIM`].
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianObservable {
    matrix: CMatrix,
}

impl HermitianObservable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, HERMITIAN_TOL)
    }

    /// Validate with a custom tolerance; the stored matrix is exactly Hermitian.
    pub fn with_tolerance(matrix: CMatrix, tol: f64) -> Result<Self> {
        check_hermitian(&matrix, tol)?;
        Ok(Self { matrix: symmetrized(&matrix) })
    }

    pub fn from_real_rows(d: usize, rows: &[f64]) -> Result<Self> {
        Self::new(real_matrix(d, rows))
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(CMatrix::identity(d, d))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Expectation value `Tr[Â ρ̂]`.
    pub fn expectation(&self, state: &DensityState) -> f64 {
        trace(&(&self.matrix * state.matrix())).re
    }
}

/// A density matrix `ρ̂`: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    matrix: CMatrix,
}

impl DensityState {
    pub const TRACE_TOL: f64 = 1e-12;
    pub const EIGEN_TOL: f64 = 1e-10;

    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_hermitian(&matrix, HERMITIAN_TOL)?;
        let matrix = symmetrized(&matrix);
        let tr = trace(&matrix);
        if (tr - c(1.0, 0.0)).norm() > Self::TRACE_TOL {
            return Err(Error::validation(format!("density matrix trace is {tr}, expected 1")));
        }
        let (vals, _) = jacobi_eigen(&matrix);
        if let Some(&min) = vals.first() {
            if min < -Self::EIGEN_TOL {
                return Err(Error::validation(format!(
                    "density matrix has negative eigenvalue {min:e}"
                )));
            }
        }
        Ok(Self { matrix })
    }

    /// `|ψ⟩⟨ψ|` for a nonzero vector, normalized.
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let d = psi.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::DimensionTooLarge(d));
        }
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2.is_finite() && norm2 > 0.0) {
            return Err(Error::validation("pure state vector must be finite and nonzero"));
        }
        let m = CMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / norm2);
        Self::new(m)
    }

    pub fn maximally_mixed(d: usize) -> Result<Self> {
        Self::new(CMatrix::identity(d, d) / c(d as f64, 0.0))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Linear map on `d × d` operators, stored as a `d² × d²` matrix acting on
/// column-stacked operators.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    dim: usize,
    action: CMatrix,
}

impl Superoperator {
    pub fn from_action(dim: usize, action: CMatrix) -> Result<Self> {
        if action.nrows() != dim * dim || action.ncols() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: action.nrows() });
        }
        Ok(Self { dim, action })
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, action: CMatrix::identity(dim * dim, dim * dim) }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, action: CMatrix::zeros(dim * dim, dim * dim) }
    }

    /// `X ↦ L X R`.
    pub fn sandwich(left: &CMatrix, right: &CMatrix) -> Self {
        let dim = left.nrows();
        Self { dim, action: right.transpose().kronecker(left) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn action(&self) -> &CMatrix {
        &self.action
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let d = self.dim;
        assert_eq!(x.nrows(), d, "operator dimension does not match superoperator");
        let v = nalgebra::DVector::from_column_slice(x.as_slice());
        let out = &self.action * v;
        CMatrix::from_column_slice(d, d, out.as_slice())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, other.dim);
        Superoperator { dim: self.dim, action: &self.action * &other.action }
    }

    pub fn add(&self, other: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, other.dim);
        Superoperator { dim: self.dim, action: &self.action + &other.action }
    }

    pub fn scale(&self, factor: C64) -> Superoperator {
        Superoperator { dim: self.dim, action: &self.action * factor }
    }
}

/// `Ǎ⁺X = ÂX`.
pub fn superop_left(obs: &HermitianObservable) -> Superoperator {
    let d = obs.dim();
    Superoperator::sandwich(obs.matrix(), &CMatrix::identity(d, d))
}

/// `Ǎ⁻X = XÂ`.
pub fn superop_right(obs: &HermitianObservable) -> Superoperator {
    let d = obs.dim();
    Superoperator::sandwich(&CMatrix::identity(d, d), obs.matrix())
}

/// `ǍᶜX = (ÂX + XÂ)/2`.
pub fn superop_c(obs: &HermitianObservable) -> Superoperator {
    superop_left(obs).add(&superop_right(obs)).scale(c(0.5, 0.0))
}

/// `Ǎ^qX = (ÂX − XÂ)/i`.
pub fn superop_q(obs: &HermitianObservable) -> Superoperator {
    superop_left(obs).add(&superop_right(obs).scale(c(-1.0, 0.0))).scale(c(0.0, -1.0))
}

/// Distinct eigenvalue levels of a Hermitian operator with their projectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub projectors: Vec<CMatrix>,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        let d = self.projectors[0].nrows();
        self.eigenvalues
            .iter()
            .zip(&self.projectors)
            .fold(CMatrix::zeros(d, d), |acc, (&l, p)| acc + p * c(l, 0.0))
    }

    /// `Σ f(λ_k) Π_k`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let d = self.projectors[0].nrows();
        self.eigenvalues
            .iter()
            .zip(&self.projectors)
            .fold(CMatrix::zeros(d, d), |acc, (&l, p)| acc + p * f(l))
    }
}

/// Eigenvalues (ascending) and unitary eigenvector matrix of a Hermitian
/// matrix by cyclic complex Jacobi rotations. Deterministic: no pivot search
/// depends on anything but the matrix entries.
pub fn jacobi_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let mut a = symmetrized(m);
    let mut v = CMatrix::identity(n, n);
    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-16 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let b = apq.norm();
                if b <= 1e-300 {
                    continue;
                }
                let phase = apq / b; // e^{iφ}
                let theta = 0.5 * (2.0 * b).atan2(a[(q, q)].re - a[(p, p)].re);
                let (s, cs) = theta.sin_cos();
                let ph_conj = phase.conj();

                // A ← A U, V ← V U
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * cs - akq * ph_conj * s;
                    a[(k, q)] = akp * s + akq * ph_conj * cs;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * cs - vkq * ph_conj * s;
                    v[(k, q)] = vkp * s + vkq * ph_conj * cs;
                }
                // A ← U† A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * cs - aqk * phase * s;
                    a[(q, k)] = apk * s + aqk * phase * cs;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)].im = 0.0;
                a[(q, q)].im = 0.0;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let vals = order.iter().map(|&i| a[(i, i)].re).collect();
    let vecs = CMatrix::from_fn(n, n, |r, k| v[(r, order[k])]);
    (vals, vecs)
}

/// Spectral decomposition into distinct levels. Eigenvalues closer than
/// `max(tol, 1e-9 · spectral range)` to their neighbour are merged.
pub fn hermitian_eig(obs: &HermitianObservable, tol: f64) -> Result<SpectralDecomposition> {
    check_hermitian(obs.matrix(), tol.max(HERMITIAN_TOL))?;
    Ok(decompose(obs.matrix(), tol))
}

pub(crate) fn decompose(m: &CMatrix, tol: f64) -> SpectralDecomposition {
    let n = m.nrows();
    let (vals, vecs) = jacobi_eigen(m);
    let range = vals[n - 1] - vals[0];
    let merge = tol.max(DEGENERACY_REL_TOL * range);

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in 0..n {
        match groups.last_mut() {
            Some(g) if vals[k] - vals[*g.last().unwrap()] <= merge => g.push(k),
            _ => groups.push(vec![k]),
        }
    }

    let mut eigenvalues = Vec::with_capacity(groups.len());
    let mut projectors = Vec::with_capacity(groups.len());
    for g in groups {
        eigenvalues.push(g.iter().map(|&k| vals[k]).sum::<f64>() / g.len() as f64);
        let mut p = CMatrix::zeros(n, n);
        for &k in &g {
            let col = vecs.column(k);
            p += col * col.adjoint();
        }
        projectors.push(p);
    }
    SpectralDecomposition { eigenvalues, projectors }
}

/// Heisenberg-picture evolution `e^{iĤt} Â e^{−iĤt}`.
///
/// With `Ĥ = ωi(|−⟩⟨+| − |+⟩⟨−|) = ωσ_y` the observable rotates at angular
/// frequency `2ω`: `σ_x(t) = σ_x cos 2ωt + σ_z sin 2ωt`.
pub fn evolve_observable(
    obs: &HermitianObservable,
    hamiltonian: &HermitianObservable,
    t: f64,
) -> Result<HermitianObservable> {
    if obs.dim() != hamiltonian.dim() {
        return Err(Error::DimensionMismatch { expected: obs.dim(), found: hamiltonian.dim() });
    }
    if !t.is_finite() {
        return Err(Error::validation("evolution time must be finite"));
    }
    if t == 0.0 {
        return Ok(obs.clone());
    }
    let spec = decompose(hamiltonian.matrix(), 0.0);
    let u = spec.map(|l| C64::from_polar(1.0, -l * t)); // e^{−iĤt}
    let evolved = u.adjoint() * obs.matrix() * &u;
    Ok(HermitianObservable { matrix: symmetrized(&evolved) })
}

/// Serializable complex matrix: rows of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRepr(pub Vec<Vec<[f64; 2]>>);

impl MatrixRepr {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let d = self.0.len();
        if self.0.iter().any(|r| r.len() != d) {
            return Err(Error::validation("matrix rows must all have length equal to the row count"));
        }
        let m = CMatrix::from_fn(d, d, |i, j| c(self.0[i][j][0], self.0[i][j][1]));
        check_finite(&m)?;
        Ok(m)
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        MatrixRepr(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sigma_x() -> HermitianObservable {
        HermitianObservable::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    fn sigma_z() -> HermitianObservable {
        HermitianObservable::from_real_rows(2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    fn random_hermitian(rng: &mut impl Rng, d: usize) -> CMatrix {
        let m = CMatrix::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        symmetrized(&m)
    }

    fn random_operator(rng: &mut impl Rng, d: usize) -> CMatrix {
        CMatrix::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
        trace(&(a.adjoint() * b))
    }

    /// Characteristic polynomial by Faddeev–LeVerrier, real roots by sign
    /// scanning and bisection. Independent of the Jacobi path.
    fn charpoly_roots(m: &CMatrix) -> Vec<f64> {
        let n = m.nrows();
        let mut coeffs = vec![c(1.0, 0.0)]; // c_n = 1, then c_{n-1}, ...
        let mut mk = CMatrix::zeros(n, n);
        let id = CMatrix::identity(n, n);
        for k in 1..=n {
            mk = m * &mk + &id * *coeffs.last().unwrap();
            let ck = -trace(&(m * &mk)) / (k as f64);
            coeffs.push(ck);
        }
        let poly = |x: f64| coeffs.iter().fold(0.0, |acc, ck| acc * x + ck.re);
        let bound = 1.0 + coeffs.iter().skip(1).map(|z| z.norm()).fold(0.0, f64::max);
        let steps = 200_000;
        let h = 2.0 * bound / steps as f64;
        let mut roots = Vec::new();
        let mut x0 = -bound;
        let mut f0 = poly(x0);
        for s in 1..=steps {
            let x1 = -bound + s as f64 * h;
            let f1 = poly(x1);
            if f0 == 0.0 {
                roots.push(x0);
            } else if f0 * f1 < 0.0 {
                let (mut lo, mut hi) = (x0, x1);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if poly(lo) * poly(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            x0 = x1;
            f0 = f1;
        }
        roots
    }

    #[test]
    fn sigma_x_spectrum() {
        let spec = hermitian_eig(&sigma_x(), 1e-9).unwrap();
        assert_eq!(spec.eigenvalues.len(), 2);
        assert!((spec.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((spec.eigenvalues[1] - 1.0).abs() < 1e-14);
        let id = CMatrix::identity(2, 2);
        let plus = (&id + sigma_x().matrix()) * c(0.5, 0.0);
        let minus = (&id - sigma_x().matrix()) * c(0.5, 0.0);
        assert!(max_abs(&(&spec.projectors[1] - plus)) < 1e-14);
        assert!(max_abs(&(&spec.projectors[0] - minus)) < 1e-14);
    }

    #[test]
    fn identity_has_single_level() {
        let spec = hermitian_eig(&HermitianObservable::identity(3).unwrap(), 1e-9).unwrap();
        assert_eq!(spec.eigenvalues, vec![1.0]);
        assert!(max_abs(&(&spec.projectors[0] - CMatrix::identity(3, 3))) < 1e-14);
    }

    #[test]
    fn non_hermitian_rejected_with_entry() {
        let m = real_matrix(2, &[0.0, 1.0, 0.5, 0.0]);
        match HermitianObservable::new(m) {
            Err(Error::NotHermitian { row: 0, col: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oversized_rejected() {
        assert!(matches!(
            HermitianObservable::new(CMatrix::identity(9, 9)),
            Err(Error::DimensionTooLarge(9))
        ));
    }

    #[test]
    fn random_4x4_matches_charpoly_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let m = random_hermitian(&mut rng, 4);
            let obs = HermitianObservable::new(m.clone()).unwrap();
            let spec = hermitian_eig(&obs, 1e-12).unwrap();
            assert!(max_abs(&(spec.reconstruct() - &m)) < 1e-10);
            let roots = charpoly_roots(&m);
            assert_eq!(roots.len(), 4, "roots {roots:?}");
            for (r, l) in roots.iter().zip(&spec.eigenvalues) {
                assert!((r - l).abs() < 1e-9, "{r} vs {l}");
            }
        }
    }

    #[test]
    fn degenerate_levels_merge() {
        let m = real_matrix(3, &[2.0, 0.0, 0.0, 0.0, 2.0 + 1e-13, 0.0, 0.0, 0.0, -1.0]);
        let spec = hermitian_eig(&HermitianObservable::new(m).unwrap(), 1e-9).unwrap();
        assert_eq!(spec.eigenvalues.len(), 2);
        let rank: f64 = trace(&spec.projectors[1]).re;
        assert!((rank - 2.0).abs() < 1e-12);
    }

    #[test]
    fn appendix_superoperator_matrix() {
        // Basis |+⟩⟨+|, |+⟩⟨−|, |−⟩⟨+|, |−⟩⟨−|; symmetric under swapping the
        // two middle entries, so column stacking gives the same matrix.
        let sc = superop_c(&sigma_x());
        let expected = real_matrix(
            4,
            &[
                0.0, 0.5, 0.5, 0.0, //
                0.5, 0.0, 0.0, 0.5, //
                0.5, 0.0, 0.0, 0.5, //
                0.0, 0.5, 0.5, 0.0,
            ],
        );
        assert!(max_abs(&(sc.action() - expected)) < 1e-15);
        let sb = superop_c(&sigma_z());
        let expected_b = real_matrix(
            4,
            &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
        );
        assert!(max_abs(&(sb.action() - expected_b)) < 1e-15);
    }

    #[test]
    fn eigenoperator_of_superop_c() {
        let b = sigma_z();
        let plus = real_matrix(2, &[1.0, 0.0, 0.0, 0.0]);
        let out = superop_c(&b).apply(&plus);
        assert!(max_abs(&(out - plus)) < 1e-15);
    }

    #[test]
    fn dimension_mismatch_in_evolution() {
        let h = HermitianObservable::identity(3).unwrap();
        assert!(matches!(
            evolve_observable(&sigma_x(), &h, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    /// e^M by scaling and squaring with a Taylor series; independent of the
    /// spectral route.
    fn expm(m: &CMatrix) -> CMatrix {
        let n = m.nrows();
        let norm = m.iter().map(|z| z.norm()).sum::<f64>();
        let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let scaled = m / c(2f64.powi(s), 0.0);
        let mut term = CMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &scaled / c(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn evolution_rotates_a_into_b() {
        let a = sigma_x();
        // Ĥ = i(|−⟩⟨+| − |+⟩⟨−|) with |+⟩ = index 0.
        let h = HermitianObservable::new(CMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (1, 0) => c(0.0, 1.0),
            (0, 1) => c(0.0, -1.0),
            _ => c(0.0, 0.0),
        }))
        .unwrap();
        for t in [0.0, 0.3, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2] {
            let evolved = evolve_observable(&a, &h, t).unwrap();
            let u = expm(&(h.matrix() * c(0.0, -t)));
            let oracle = u.adjoint() * a.matrix() * &u;
            assert!(max_abs(&(evolved.matrix() - oracle)) < 1e-12);
        }
        let quarter = evolve_observable(&a, &h, std::f64::consts::FRAC_PI_4).unwrap();
        assert!(max_abs(&(quarter.matrix() - sigma_z().matrix())) < 1e-12);
        let half = evolve_observable(&a, &h, std::f64::consts::FRAC_PI_2).unwrap();
        assert!(max_abs(&(half.matrix() + a.matrix())) < 1e-12);
        assert_eq!(evolve_observable(&a, &h, 0.0).unwrap(), a);
    }

    #[test]
    fn density_state_validation() {
        assert!(DensityState::new(real_matrix(2, &[0.5, 0.0, 0.0, 0.6])).is_err());
        assert!(DensityState::new(real_matrix(2, &[1.5, 0.0, 0.0, -0.5])).is_err());
        let psi = [c(1.0, 0.0), c(0.0, 1.0)];
        let rho = DensityState::from_pure(&psi).unwrap();
        assert!((trace(rho.matrix()).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_repr_roundtrip() {
        let m = CMatrix::from_fn(3, 3, |i, j| c(i as f64, j as f64 - 1.0));
        assert_eq!(MatrixRepr::from_matrix(&m).to_matrix().unwrap(), m);
        assert!(MatrixRepr(vec![vec![[0.0, 0.0]; 2]]).to_matrix().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn superoperator_identities(seed in any::<u64>(), d in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let obs = HermitianObservable::new(random_hermitian(&mut rng, d)).unwrap();
            let x = random_operator(&mut rng, d);
            let y = random_operator(&mut rng, d);
            let (sc, sq) = (superop_c(&obs), superop_q(&obs));
            let (sp, sm) = (superop_left(&obs), superop_right(&obs));

            let a = obs.matrix();
            let direct_c = (a * &x + &x * a) * c(0.5, 0.0);
            let direct_q = (a * &x - &x * a) * c(0.0, -1.0);
            prop_assert!(max_abs(&(sc.apply(&x) - direct_c)) < 1e-12);
            prop_assert!(max_abs(&(sq.apply(&x) - direct_q)) < 1e-12);
            prop_assert!(max_abs(&(sc.scale(c(2.0, 0.0)).action() - sp.add(&sm).action())) < 1e-12);
            let diff = sp.add(&sm.scale(c(-1.0, 0.0)));
            prop_assert!(max_abs(&(sq.scale(c(0.0, 1.0)).action() - diff.action())) < 1e-12);

            prop_assert!(trace(&sq.apply(&x)).norm() < 1e-12);
            let lhs = hs_inner(&y, &sc.apply(&x));
            let rhs = hs_inner(&sc.apply(&y), &x);
            prop_assert!((lhs - rhs).norm() < 1e-12);

            let id = Superoperator::identity(d);
            prop_assert!(max_abs(&(id.apply(&x) - &x)) < 1e-15);
            let left = sc.compose(&sq).compose(&sp);
            let right = sc.compose(&sq.compose(&sp));
            prop_assert!(max_abs(&(left.action() - right.action())) < 1e-12);
        }

        #[test]
        fn spectral_reconstruction(seed in any::<u64>(), d in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_hermitian(&mut rng, d);
            let spec = hermitian_eig(&HermitianObservable::new(m.clone()).unwrap(), 1e-12).unwrap();
            prop_assert!(max_abs(&(spec.reconstruct() - &m)) < 1e-10);
            let mut sum = CMatrix::zeros(d, d);
            for (i, p) in spec.projectors.iter().enumerate() {
                prop_assert!(max_abs(&(p * p - p)) < 1e-10);
                for q in spec.projectors.iter().skip(i + 1) {
                    prop_assert!(max_abs(&(p * q)) < 1e-10);
                }
                sum += p;
            }
            prop_assert!(max_abs(&(sum - CMatrix::identity(d, d))) < 1e-10);
            for w in spec.eigenvalues.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }

        #[test]
        fn evolution_preserves_spectrum(seed in any::<u64>(), t in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = HermitianObservable::new(random_hermitian(&mut rng, 3)).unwrap();
            let h = HermitianObservable::new(random_hermitian(&mut rng, 3)).unwrap();
            let ev = evolve_observable(&a, &h, t).unwrap();
            check_hermitian(ev.matrix(), 1e-12).unwrap();
            let (va, _) = jacobi_eigen(a.matrix());
            let (vb, _) = jacobi_eigen(ev.matrix());
            for (x, y) in va.iter().zip(&vb) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
