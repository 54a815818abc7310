//! Moment and cumulant calculus over multi-indices, truncated moment-matrix
//! positivity, and Gaussian-noise calibration.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::quasiprob::QuasiDistribution;

pub const DEFAULT_MAX_DEGREE: u32 = 12;
/// Relative eigenvalue tolerance for PSD decisions.
pub const PSD_REL_TOL: f64 = 1e-9;
pub const CS_TOL: f64 = 1e-12;

/// Exponent tuple. Ordered by total degree, then lexicographically
/// descending, so `1 < a < b < a² < ab < b² < …`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn add(&self, other: &Self) -> Self {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        self.0.iter().zip(&other.0).map(|(a, b)| a.checked_sub(*b)).collect::<Option<Vec<_>>>().map(MultiIndex)
    }

    /// `Π binom(αᵢ, βᵢ)`.
    pub fn binomial(&self, beta: &Self) -> f64 {
        self.0.iter().zip(&beta.0).map(|(&a, &b)| binomial(a, b)).product()
    }

    /// Every `β ≤ self` componentwise.
    pub fn divisors(&self) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex(Vec::with_capacity(self.n()))];
        for &a in &self.0 {
            out = out
                .into_iter()
                .flat_map(|m| {
                    (0..=a).map(move |b| {
                        let mut v = m.0.clone();
                        v.push(b);
                        MultiIndex(v)
                    })
                })
                .collect();
        }
        out
    }

    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&e, &xi)| xi.powi(e as i32)).product()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl std::str::FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        if s.is_empty() {
            return Ok(MultiIndex(Vec::new()));
        }
        s.split(',')
            .map(|p| p.trim().parse::<u32>().map_err(|_| Error::validation(format!("bad exponent '{p}'"))))
            .collect::<Result<Vec<_>>>()
            .map(MultiIndex)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// All multi-indices of `n` variables with degree ≤ `k`, in graded order.
pub fn multi_indices(n: usize, k: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for d in 0..=k {
        let mut level = Vec::new();
        compositions(n, d, &mut Vec::new(), &mut level);
        level.sort();
        out.extend(level);
    }
    out
}

fn compositions(n: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if prefix.len() + 1 == n {
        prefix.push(d);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    if n == 0 {
        if d == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    for e in 0..=d {
        prefix.push(e);
        compositions(n, d - e, prefix, out);
        prefix.pop();
    }
}

pub trait TableKind: Clone + fmt::Debug + PartialEq + Send + Sync {}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments;
#[derive(Clone, Debug, PartialEq)]
pub struct Cumulants;
impl TableKind for Moments {}
impl TableKind for Cumulants {}

/// Complete table of values for every multi-index up to `max_degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable<K: TableKind> {
    variables: usize,
    max_degree: u32,
    values: BTreeMap<MultiIndex, f64>,
    kind: PhantomData<K>,
}

pub type MomentTable = SeriesTable<Moments>;
pub type CumulantTable = SeriesTable<Cumulants>;

impl<K: TableKind> SeriesTable<K> {
    /// Build from a function of the multi-index.
    pub fn from_fn(variables: usize, max_degree: u32, mut f: impl FnMut(&MultiIndex) -> f64) -> Self {
        let values = multi_indices(variables, max_degree).into_iter().map(|m| (f(&m), m)).map(|(v, m)| (m, v)).collect();
        Self { variables, max_degree, values, kind: PhantomData }
    }

    /// Build from explicit entries; missing indices are an error.
    pub fn from_values(variables: usize, max_degree: u32, values: BTreeMap<MultiIndex, f64>) -> Result<Self> {
        for m in values.keys() {
            if m.n() != variables {
                return Err(Error::DimensionMismatch { expected: variables, found: m.n() });
            }
            if m.degree() > max_degree {
                return Err(Error::DegreeOverflow { degree: m.degree(), max: max_degree });
            }
        }
        for m in multi_indices(variables, max_degree) {
            match values.get(&m) {
                None => return Err(Error::validation(format!("table is missing the entry ({m})"))),
                Some(v) if !v.is_finite() => return Err(Error::validation(format!("entry ({m}) is not finite"))),
                _ => {}
            }
        }
        Ok(Self { variables, max_degree, values, kind: PhantomData })
    }

    pub fn variables(&self) -> usize {
        self.variables
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn get(&self, m: &MultiIndex) -> Result<f64> {
        if m.n() != self.variables {
            return Err(Error::DimensionMismatch { expected: self.variables, found: m.n() });
        }
        self.values.get(m).copied().ok_or(Error::DegreeOverflow { degree: m.degree(), max: self.max_degree })
    }

    /// Shorthand for `get` with an exponent slice; panics when absent.
    pub fn at(&self, exponents: &[u32]) -> f64 {
        self.values[&MultiIndex(exponents.to_vec())]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.values.iter().map(|(m, v)| (m, *v))
    }

    /// Entries up to a lower degree.
    pub fn truncate(&self, max_degree: u32) -> Result<Self> {
        if max_degree > self.max_degree {
            return Err(Error::DegreeOverflow { degree: max_degree, max: self.max_degree });
        }
        Ok(Self {
            variables: self.variables,
            max_degree,
            values: self.values.iter().filter(|(m, _)| m.degree() <= max_degree).map(|(m, v)| (m.clone(), *v)).collect(),
            kind: PhantomData,
        })
    }

    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        self.values.iter().map(|(m, v)| (v - other.values.get(m).copied().unwrap_or(f64::NAN)).abs()).fold(0.0, f64::max)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.variables != other.variables {
            return Err(Error::DimensionMismatch { expected: self.variables, found: other.variables });
        }
        if self.max_degree != other.max_degree {
            return Err(Error::validation(format!(
                "tables have different degrees {} and {}",
                self.max_degree, other.max_degree
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    variables: usize,
    max_degree: u32,
    #[serde(with = "index_map")]
    values: BTreeMap<MultiIndex, f64>,
}

impl<K: TableKind> Serialize for SeriesTable<K> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TableRepr { variables: self.variables, max_degree: self.max_degree, values: self.values.clone() }.serialize(s)
    }
}

impl<'de, K: TableKind> Deserialize<'de> for SeriesTable<K> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TableRepr::deserialize(d)?;
        Self::from_values(repr.variables, repr.max_degree, repr.values).map_err(D::Error::custom)
    }
}

/// `M_α = Σ w Π xᵢ^{αᵢ}` over the atoms of `q`.
pub fn moments_of_quasi(q: &QuasiDistribution, k: u32) -> Result<MomentTable> {
    if k > DEFAULT_MAX_DEGREE {
        return Err(Error::DegreeOverflow { degree: k, max: DEFAULT_MAX_DEGREE });
    }
    let atoms: Vec<(Vec<f64>, f64)> = q.atoms().collect();
    Ok(MomentTable::from_fn(q.n(), k, |m| atoms.iter().map(|(x, w)| w * m.monomial(x)).sum()))
}

/// Moments of a finitely supported distribution given as `(point, weight)`.
pub fn moments_of_atoms(n: usize, k: u32, atoms: &[(Vec<f64>, f64)]) -> MomentTable {
    MomentTable::from_fn(n, k, |m| atoms.iter().map(|(x, w)| w * m.monomial(x)).sum())
}

/// First nonzero coordinate, used to peel one derivative off `α`.
fn pivot(alpha: &MultiIndex) -> Option<usize> {
    alpha.0.iter().position(|&e| e > 0)
}

/// Terms of `M_α = Σ_{β ≤ α−eⱼ} binom(α−eⱼ, β) M_β C_{α−β}`; `β = 0` is
/// excluded so the caller can solve for either `M_α` or `C_α`.
fn recursion_sum(alpha: &MultiIndex, m: &BTreeMap<MultiIndex, f64>, c: &BTreeMap<MultiIndex, f64>) -> f64 {
    let j = pivot(alpha).expect("nonzero index");
    let mut reduced = alpha.clone();
    reduced.0[j] -= 1;
    reduced
        .divisors()
        .into_iter()
        .filter(|b| b.degree() > 0)
        .map(|b| {
            let rest = alpha.checked_sub(&b).unwrap();
            reduced.binomial(&b) * m[&b] * c[&rest]
        })
        .sum()
}

/// `ln Φ` truncated to the table's degree. Requires `M_∅ = 1`.
pub fn moments_to_cumulants(m: &MomentTable) -> Result<CumulantTable> {
    let zero = MultiIndex::zero(m.variables);
    if (m.values[&zero] - 1.0).abs() > 1e-12 {
        return Err(Error::validation(format!("moment table has M_0 = {} instead of 1", m.values[&zero])));
    }
    let mut c = BTreeMap::new();
    c.insert(zero, 0.0);
    for (alpha, &ma) in m.values.iter().skip(1) {
        let v = ma - recursion_sum(alpha, &m.values, &c);
        c.insert(alpha.clone(), v);
    }
    Ok(CumulantTable { variables: m.variables, max_degree: m.max_degree, values: c, kind: PhantomData })
}

/// `exp` of the cumulant series. Requires `C_∅ = 0`.
pub fn cumulants_to_moments(c: &CumulantTable) -> Result<MomentTable> {
    let zero = MultiIndex::zero(c.variables);
    if c.values[&zero].abs() > 1e-12 {
        return Err(Error::validation(format!("cumulant table has C_0 = {} instead of 0", c.values[&zero])));
    }
    let mut m = BTreeMap::new();
    m.insert(zero, 1.0);
    for (alpha, &ca) in c.values.iter().skip(1) {
        let v = ca + recursion_sum(alpha, &m, &c.values);
        m.insert(alpha.clone(), v);
    }
    Ok(MomentTable { variables: c.variables, max_degree: c.max_degree, values: m, kind: PhantomData })
}

/// Cumulants of a sum of independent variables.
pub fn combine_independent(cq: &CumulantTable, cn: &CumulantTable) -> Result<CumulantTable> {
    cq.same_shape(cn)?;
    Ok(CumulantTable::from_fn(cq.variables, cq.max_degree, |m| cq.values[m] + cn.values[m]))
}

/// Zero-mean Gaussian with independent components.
pub fn gaussian_cumulants(variances: &[f64], k: u32) -> CumulantTable {
    let n = variances.len();
    CumulantTable::from_fn(n, k, |m| {
        if m.degree() == 2 {
            m.0.iter().position(|&e| e == 2).map_or(0.0, |i| variances[i])
        } else {
            0.0
        }
    })
}

/// Moments of `Q` with independent Gaussian noise of the given variances.
pub fn add_gaussian_noise(m: &MomentTable, variances: &[f64]) -> Result<MomentTable> {
    if variances.len() != m.variables {
        return Err(Error::DimensionMismatch { expected: m.variables, found: variances.len() });
    }
    let c = combine_independent(&moments_to_cumulants(m)?, &gaussian_cumulants(variances, m.max_degree))?;
    cumulants_to_moments(&c)
}

/// `entry(α, β) = M_{α+β}` over monomials of degree ≤ `D`, after rescaling
/// every variable to unit second moment where that moment is positive.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrix {
    pub basis: Vec<MultiIndex>,
    /// Multiplier applied to each variable before forming entries.
    pub scales: Vec<f64>,
    pub entries: DMatrix<f64>,
}

impl MomentMatrix {
    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Coefficients in the original variables of the polynomial whose square
    /// has expectation `vᵀ·entries·v`.
    pub fn polynomial_from_vector(&self, v: &DVector<f64>) -> Polynomial {
        let n = self.scales.len();
        let mut p = Polynomial::zero(n);
        for (b, &vi) in self.basis.iter().zip(v.iter()) {
            let s: f64 = b.0.iter().zip(&self.scales).map(|(&e, &si)| si.powi(e as i32)).product();
            p.add_term(b.clone(), vi * s);
        }
        p
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Vec::<u32>::deserialize(d).map(MultiIndex)
    }
}

pub fn moment_matrix(m: &MomentTable, d: u32) -> Result<MomentMatrix> {
    if 2 * d > m.max_degree {
        return Err(Error::validation(format!(
            "moment matrix of degree {d} needs moments to degree {}, table has {}",
            2 * d,
            m.max_degree
        )));
    }
    let n = m.variables;
    let scales: Vec<f64> = (0..n)
        .map(|i| {
            let mut e = MultiIndex::zero(n);
            e.0[i] = 2;
            let m2 = m.values[&e];
            if m2 > 0.0 {
                1.0 / m2.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let basis = multi_indices(n, d);
    let k = basis.len();
    let entries = DMatrix::from_fn(k, k, |i, j| {
        let a = basis[i].add(&basis[j]);
        let s: f64 = a.0.iter().zip(&scales).map(|(&e, &si)| si.powi(e as i32)).product();
        m.values[&a] * s
    });
    Ok(MomentMatrix { basis, scales, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdCheck {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    /// Unit eigenvector of the smallest eigenvalue.
    pub witness_vector: Vec<f64>,
    pub trace: f64,
}

/// PSD within `−tol · trace`.
pub fn psd_check(mm: &MomentMatrix, tol: f64) -> PsdCheck {
    let eig = SymmetricEigen::new(mm.entries.clone());
    let (idx, &min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty matrix");
    let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
    // Fix the sign so the output is deterministic.
    let lead = v.iter().copied().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() + 1e-12 { x } else { acc });
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let trace = mm.trace();
    PsdCheck { is_psd: min >= -tol * trace.abs(), min_eigenvalue: min, witness_vector: v, trace }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub variance: f64,
    pub bracket: (f64, f64),
    pub matrix_min_eigenvalue_at_variance: f64,
    pub trace_at_variance: f64,
    /// "bisection", "scan", or "none" when no noise is needed.
    pub method: String,
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationOptions {
    /// Per-variable weights of the added variance (isotropic when `None`).
    pub direction: Option<Vec<f64>>,
    pub v_max: f64,
    pub max_scan_points: usize,
    pub exec: Exec,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { direction: None, v_max: 1e8, max_scan_points: 10_000_000, exec: Exec::default() }
    }
}

fn psd_with_noise(m: &MomentTable, d: u32, dir: &[f64], v: f64) -> Result<PsdCheck> {
    let vars: Vec<f64> = dir.iter().map(|w| w * v).collect();
    let mp = add_gaussian_noise(&m.truncate(2 * d)?, &vars)?;
    Ok(psd_check(&moment_matrix(&mp, d)?, PSD_REL_TOL))
}

/// Smallest added Gaussian variance making the degree-`d` moment matrix PSD.
pub fn calibrate_gaussian_noise(
    m: &MomentTable,
    d: u32,
    bracket_width: f64,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    if !(bracket_width.is_finite() && bracket_width > 0.0) {
        return Err(Error::validation("bracket width must be positive"));
    }
    let dir = opts.direction.clone().unwrap_or_else(|| vec![1.0; m.variables]);
    if dir.len() != m.variables || dir.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || dir.iter().all(|w| *w == 0.0) {
        return Err(Error::validation("direction must be a nonnegative, nonzero vector per variable"));
    }
    let at0 = psd_with_noise(m, d, &dir, 0.0)?;
    if at0.is_psd {
        return Ok(CalibrationResult {
            variance: 0.0,
            bracket: (0.0, 0.0),
            matrix_min_eigenvalue_at_variance: at0.min_eigenvalue,
            trace_at_variance: at0.trace,
            method: "none".into(),
            monotone: true,
        });
    }

    let mut lo = 0.0;
    let mut hi = bracket_width.max(1e-3);
    loop {
        if hi > opts.v_max {
            return Err(Error::Convergence(format!(
                "no PSD variance found up to {}; min eigenvalue at zero noise {:e}",
                opts.v_max, at0.min_eigenvalue
            )));
        }
        if psd_with_noise(m, d, &dir, hi)?.is_psd {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }

    let probes = exec::map_range(opts.exec, 20, |k| {
        psd_with_noise(m, d, &dir, hi * (k + 1) as f64 / 20.0).map(|c| c.is_psd)
    })
    .into_iter()
    .collect::<Result<Vec<bool>>>()?;
    let monotone = probes.windows(2).all(|w| !w[0] || w[1]);

    let (lo, hi, method) = if monotone {
        while hi - lo > bracket_width {
            let mid = 0.5 * (lo + hi);
            if psd_with_noise(m, d, &dir, mid)?.is_psd {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo, hi, "bisection")
    } else {
        log::warn!("PSD predicate not monotone in the added variance; scanning");
        let (lo, hi) = scan_first_psd(m, d, &dir, bracket_width, hi, opts)?;
        (lo, hi, "scan")
    };
    let at = psd_with_noise(m, d, &dir, hi)?;
    Ok(CalibrationResult {
        variance: hi,
        bracket: (lo, hi),
        matrix_min_eigenvalue_at_variance: at.min_eigenvalue,
        trace_at_variance: at.trace,
        method: method.into(),
        monotone,
    })
}

/// Linear scan from zero with step `width`; the first passing point wins.
fn scan_first_psd(
    m: &MomentTable,
    d: u32,
    dir: &[f64],
    width: f64,
    upper: f64,
    opts: &CalibrationOptions,
) -> Result<(f64, f64)> {
    let total = (upper / width).ceil() as usize + 1;
    if total > opts.max_scan_points {
        return Err(Error::ResourceLimit { what: format!("calibration scan of {total} points"), bound: opts.max_scan_points });
    }
    const CHUNK: usize = 256;
    let mut start = 0;
    while start < total {
        let len = CHUNK.min(total - start);
        let hits = exec::map_range(opts.exec, len, |k| psd_with_noise(m, d, dir, (start + k) as f64 * width))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        if let Some(k) = hits.iter().position(|c| c.is_psd) {
            let idx = start + k;
            return Ok(((idx.max(1) - 1) as f64 * width, idx as f64 * width));
        }
        start += len;
    }
    Ok((upper - width, upper))
}

/// Serde helper: multi-index maps as JSON objects keyed `"e1,e2,…"`.
mod index_map {
    use super::*;

    pub fn serialize<S: Serializer>(map: &BTreeMap<MultiIndex, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_map(map.iter().map(|(m, v)| (m.to_string(), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<MultiIndex, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| k.parse::<MultiIndex>().map(|m| (m, v)))
            .collect::<Result<_>>()
            .map_err(D::Error::custom)
    }
}

/// Sparse real polynomial in `n` variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolynomialRepr")]
pub struct Polynomial {
    pub variables: usize,
    #[serde(with = "index_map")]
    pub terms: BTreeMap<MultiIndex, f64>,
}

#[derive(Deserialize)]
struct PolynomialRepr {
    variables: usize,
    #[serde(with = "index_map")]
    terms: BTreeMap<MultiIndex, f64>,
}

impl TryFrom<PolynomialRepr> for Polynomial {
    type Error = Error;

    fn try_from(r: PolynomialRepr) -> Result<Self> {
        if let Some(m) = r.terms.keys().find(|m| m.n() != r.variables) {
            return Err(Error::DimensionMismatch { expected: r.variables, found: m.n() });
        }
        Ok(Polynomial { variables: r.variables, terms: r.terms })
    }
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial { variables: n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(MultiIndex::zero(n), c);
        p
    }

    pub fn var(n: usize, i: usize) -> Self {
        let mut p = Self::zero(n);
        p.add_term(MultiIndex::unit(n, i), 1.0);
        p
    }

    pub fn from_terms(n: usize, terms: &[(&[u32], f64)]) -> Result<Self> {
        let mut p = Self::zero(n);
        for (e, c) in terms {
            if e.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: e.len() });
            }
            p.add_term(MultiIndex(e.to_vec()), *c);
        }
        Ok(p)
    }

    pub fn add_term(&mut self, m: MultiIndex, c: f64) {
        let e = self.terms.entry(m.clone()).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.remove(&m);
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (m, c) in &other.terms {
            p.add_term(m.clone(), *c);
        }
        p
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Self::zero(self.variables);
        for (m, c) in &self.terms {
            p.add_term(m.clone(), c * s);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero(self.variables);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                p.add_term(a.add(b), ca * cb);
            }
        }
        p
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::constant(self.variables, 1.0), |acc, _| acc.mul(self))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.monomial(x)).sum()
    }
}

/// `Σ c_α M_α`.
pub fn expectation_of_polynomial(m: &MomentTable, poly: &Polynomial) -> Result<f64> {
    if poly.variables != m.variables {
        return Err(Error::DimensionMismatch { expected: m.variables, found: poly.variables });
    }
    poly.terms.iter().map(|(a, c)| m.get(a).map(|v| c * v)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchySchwarz {
    pub lhs: f64,
    pub rhs: f64,
    pub violated: bool,
}

/// `⟨uv⟩² ≤ ⟨u²⟩⟨v²⟩`.
pub fn cauchy_schwarz_check(m: &MomentTable, u: &Polynomial, v: &Polynomial) -> Result<CauchySchwarz> {
    let needed = (2 * u.degree()).max(2 * v.degree());
    if needed > m.max_degree {
        return Err(Error::DegreeOverflow { degree: needed, max: m.max_degree });
    }
    let uv = expectation_of_polynomial(m, &u.mul(v))?;
    let lhs = uv * uv;
    let rhs = expectation_of_polynomial(m, &u.mul(u))? * expectation_of_polynomial(m, &v.mul(v))?;
    Ok(CauchySchwarz { lhs, rhs, violated: lhs > rhs + CS_TOL })
}

/// Nonnegative polynomials used as sanity probes: `(a−b²)²`,
/// `a²b⁴+a⁴+b²−3a²b²` and `1+a²b²+b²c²+c²a²−4abc`. The last two are not sums
/// of squares.
pub fn positive_polynomial_catalog() -> Vec<(&'static str, Polynomial)> {
    let a = Polynomial::var(2, 0);
    let b = Polynomial::var(2, 1);
    let first = a.add(&b.pow(2).scale(-1.0)).pow(2);
    let second = Polynomial::from_terms(2, &[(&[2, 4], 1.0), (&[4, 0], 1.0), (&[0, 2], 1.0), (&[2, 2], -3.0)])
        .expect("two variables");
    let third = Polynomial::from_terms(
        3,
        &[(&[0, 0, 0], 1.0), (&[2, 2, 0], 1.0), (&[0, 2, 2], 1.0), (&[2, 0, 2], 1.0), (&[1, 1, 1], -4.0)],
    )
    .expect("three variables");
    vec![("(a-b^2)^2", first), ("a^2b^4+a^4+b^2-3a^2b^2", second), ("1+a^2b^2+b^2c^2+c^2a^2-4abc", third)]
}

/// `(1−a²)(1−b)/2`, whose square isolates the atom at `(0, −1)`.
pub fn table1_probe() -> Polynomial {
    let one = Polynomial::constant(2, 1.0);
    let a = Polynomial::var(2, 0);
    let b = Polynomial::var(2, 1);
    one.add(&a.pow(2).scale(-1.0)).mul(&one.add(&b.scale(-1.0))).scale(0.5)
}
