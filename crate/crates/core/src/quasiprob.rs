//! Quasiprobabilities of observation sequences.
//!
//! Each observation is represented by the symmetrized-product superoperator
//! `Ǎᶜ`, whose spectral decomposition splits an operator `X` (written in the
//! eigenbasis of `Â`) into blocks `Π_i X Π_j` with eigenvalue
//! `(λ_i + λ_j)/2`. Sequences of such spectral deltas, applied earliest-first
//! to `ρ̂` and traced, give a finite set of weighted outcome tuples.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::linalg::{
    self, decompose, evolve_observable, CMatrix, DensityState, HermitianObservable,
    Superoperator, C64,
};

/// Outcome coordinates closer than this are the same outcome.
pub const OUTCOME_TOL: f64 = 1e-9;
/// Branches and atoms with smaller magnitude are dropped.
pub const PRUNE_TOL: f64 = 1e-14;
pub const DEFAULT_ATOM_LIMIT: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub observable: usize,
    pub time: f64,
}

/// Ordered observations of registered observables, optionally evolved in the
/// Heisenberg picture under a time-independent Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    registry: Vec<HermitianObservable>,
    steps: Vec<Step>,
    hamiltonian: Option<HermitianObservable>,
}

impl Schedule {
    pub fn new(
        registry: Vec<HermitianObservable>,
        steps: Vec<Step>,
        hamiltonian: Option<HermitianObservable>,
    ) -> Result<Self> {
        let dim = registry
            .first()
            .map(HermitianObservable::dim)
            .ok_or_else(|| Error::validation("observable registry is empty"))?;
        for obs in registry.iter().chain(hamiltonian.iter()) {
            if obs.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: obs.dim() });
            }
        }
        for (k, step) in steps.iter().enumerate() {
            if step.observable >= registry.len() {
                return Err(Error::validation(format!(
                    "step {k} refers to observable {} but only {} are registered",
                    step.observable,
                    registry.len()
                )));
            }
            if !step.time.is_finite() {
                return Err(Error::validation(format!("step {k} has a non-finite time")));
            }
            if k > 0 && step.time < steps[k - 1].time {
                return Err(Error::validation(format!("step {k} is earlier than step {}", k - 1)));
            }
        }
        Ok(Self { registry, steps, hamiltonian })
    }

    /// Untimed sequence (all at t = 0) without a Hamiltonian.
    pub fn sequence(registry: Vec<HermitianObservable>, order: &[usize]) -> Result<Self> {
        let steps = order.iter().map(|&observable| Step { observable, time: 0.0 }).collect();
        Self::new(registry, steps, None)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.registry[0].dim()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn registry(&self) -> &[HermitianObservable] {
        &self.registry
    }

    pub fn hamiltonian(&self) -> Option<&HermitianObservable> {
        self.hamiltonian.as_ref()
    }

    pub fn without_step(&self, step: usize) -> Result<Self> {
        if step >= self.steps.len() {
            return Err(Error::validation(format!("step {step} out of range")));
        }
        let mut steps = self.steps.clone();
        steps.remove(step);
        Ok(Self { steps, ..self.clone() })
    }

    /// Observable `observable` evolved to time `t`.
    pub fn observable_at(&self, observable: usize, t: f64) -> Result<HermitianObservable> {
        let obs = &self.registry[observable];
        match &self.hamiltonian {
            Some(h) => evolve_observable(obs, h, t),
            None => Ok(obs.clone()),
        }
    }

    /// The observable of each step, evolved to that step's time.
    pub fn evolved_observables(&self) -> Result<Vec<HermitianObservable>> {
        self.steps.iter().map(|s| self.observable_at(s.observable, s.time)).collect()
    }
}

/// Spectral-delta structure of one observable: its eigenprojectors and, for
/// every distinct midpoint value, the eigenvalue pairs that produce it.
#[derive(Clone, Debug)]
pub(crate) struct DeltaFamily {
    pub eigenvalues: Vec<f64>,
    pub projectors: Vec<CMatrix>,
    pub values: Vec<f64>,
    pub pairs: Vec<Vec<(usize, usize)>>,
}

impl DeltaFamily {
    pub fn new(obs: &HermitianObservable) -> Self {
        let spec = decompose(obs.matrix(), 0.0);
        let n = spec.eigenvalues.len();
        let mut mids: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                mids.push((0.5 * (spec.eigenvalues[i] + spec.eigenvalues[j]), i, j));
            }
        }
        mids.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let range = spec.eigenvalues[n - 1] - spec.eigenvalues[0];
        let tol = OUTCOME_TOL.max(linalg::DEGENERACY_REL_TOL * range);

        let mut values: Vec<f64> = Vec::new();
        let mut pairs: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut anchor = f64::NEG_INFINITY;
        for (m, i, j) in mids {
            if m - anchor > tol {
                anchor = m;
                values.push(m);
                pairs.push(Vec::new());
            }
            pairs.last_mut().unwrap().push((i, j));
        }
        // Representative value: mean of the merged midpoints.
        for (v, ps) in values.iter_mut().zip(&pairs) {
            *v = ps
                .iter()
                .map(|&(i, j)| 0.5 * (spec.eigenvalues[i] + spec.eigenvalues[j]))
                .sum::<f64>()
                / ps.len() as f64;
        }
        Self { eigenvalues: spec.eigenvalues, projectors: spec.projectors, values, pairs }
    }

    /// `Σ_{(i,j)} Π_i X Π_j` over the pairs of value `k`.
    pub fn project(&self, k: usize, x: &CMatrix) -> CMatrix {
        let d = x.nrows();
        let mut out = CMatrix::zeros(d, d);
        for &(i, j) in &self.pairs[k] {
            out += &self.projectors[i] * x * &self.projectors[j];
        }
        out
    }

    /// `Tr[P_k(X)]`; only diagonal blocks survive the trace.
    pub fn traced(&self, k: usize, x: &CMatrix) -> f64 {
        self.pairs[k]
            .iter()
            .filter(|(i, j)| i == j)
            .map(|&(i, _)| linalg::trace(&(&self.projectors[i] * x)).re)
            .sum()
    }

    pub fn superoperator(&self, k: usize) -> Superoperator {
        let d = self.projectors[0].nrows();
        self.pairs[k].iter().fold(Superoperator::zero(d), |acc, &(i, j)| {
            acc.add(&Superoperator::sandwich(&self.projectors[i], &self.projectors[j]))
        })
    }
}

#[derive(Clone, Debug)]
pub struct SpectralBranch {
    pub value: f64,
    pub projector: Superoperator,
}

/// Decomposition `δ(a − Ǎᶜ) = Σ_μ δ(a − μ) P_μ` of an observable's
/// symmetrized-product superoperator, with `μ` ascending.
pub fn spectral_delta(obs: &HermitianObservable) -> Vec<SpectralBranch> {
    let family = DeltaFamily::new(obs);
    (0..family.values.len())
        .map(|k| SpectralBranch { value: family.values[k], projector: family.superoperator(k) })
        .collect()
}

/// Finitely supported real weights on outcome tuples. Weights may be
/// negative; atoms are keyed by indices into per-step sorted supports.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiDistribution {
    supports: Vec<Vec<f64>>,
    atoms: BTreeMap<Vec<u32>, f64>,
}

impl QuasiDistribution {
    /// Build from explicit atoms; coordinates within [`OUTCOME_TOL`] merge.
    pub fn from_atoms<I>(n: usize, atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        let atoms: Vec<(Vec<f64>, f64)> = atoms.into_iter().collect();
        for (k, (x, w)) in atoms.iter().enumerate() {
            if x.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: x.len() });
            }
            if !w.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("atom {k} has non-finite entries")));
            }
        }
        let supports: Vec<Vec<f64>> = (0..n)
            .map(|i| merge_values(atoms.iter().map(|(x, _)| x[i]).collect()))
            .collect();
        let mut map = BTreeMap::new();
        for (x, w) in atoms {
            let key: Vec<u32> =
                x.iter().zip(&supports).map(|(v, s)| nearest_index(s, *v) as u32).collect();
            *map.entry(key).or_insert(0.0) += w;
        }
        Ok(Self { supports, atoms: map })
    }

    pub fn n(&self) -> usize {
        self.supports.len()
    }

    pub fn supports(&self) -> &[Vec<f64>] {
        &self.supports
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Atoms as `(outcomes, weight)`, in lexicographic support order.
    pub fn atoms(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        self.atoms.iter().map(move |(k, &w)| {
            (k.iter().zip(&self.supports).map(|(&i, s)| s[i as usize]).collect(), w)
        })
    }

    /// Weight at an outcome tuple, zero if absent.
    pub fn weight(&self, outcomes: &[f64]) -> f64 {
        if outcomes.len() != self.n() {
            return 0.0;
        }
        let mut key = Vec::with_capacity(outcomes.len());
        for (v, s) in outcomes.iter().zip(&self.supports) {
            let i = nearest_index(s, *v);
            if s.is_empty() || (s[i] - v).abs() > OUTCOME_TOL {
                return 0.0;
            }
            key.push(i as u32);
        }
        self.atoms.get(&key).copied().unwrap_or(0.0)
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.values().sum()
    }

    /// `Σ weight · Π outcome_i^{exponents_i}`.
    pub fn moment(&self, exponents: &[u32]) -> f64 {
        assert_eq!(exponents.len(), self.n());
        self.atoms()
            .map(|(x, w)| w * x.iter().zip(exponents).map(|(v, &e)| v.powi(e as i32)).product::<f64>())
            .sum()
    }

    /// Largest weight difference over the union of both supports.
    pub fn max_abs_difference(&self, other: &QuasiDistribution) -> f64 {
        if self.n() != other.n() {
            return f64::INFINITY;
        }
        let merged = QuasiDistribution::from_atoms(
            self.n(),
            self.atoms().chain(other.atoms().map(|(x, w)| (x, -w))),
        )
        .expect("atoms of valid distributions are valid");
        merged.atoms.values().fold(0.0, |m, w| m.max(w.abs()))
    }

    fn prune(mut self) -> Self {
        self.atoms.retain(|_, w| w.abs() >= PRUNE_TOL);
        self
    }
}

fn merge_values(mut vals: Vec<f64>) -> Vec<f64> {
    vals.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for v in vals {
        match out.last() {
            Some(&last) if v - last <= OUTCOME_TOL => {}
            _ => out.push(v),
        }
    }
    out
}

fn nearest_index(sorted: &[f64], v: f64) -> usize {
    match sorted.binary_search_by(|s| s.total_cmp(&v)) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i >= sorted.len() => sorted.len() - 1,
        Err(i) => {
            if (v - sorted[i - 1]).abs() <= (sorted[i] - v).abs() {
                i - 1
            } else {
                i
            }
        }
    }
}

/// Sum weights over one step's outcome.
pub fn marginalize(q: &QuasiDistribution, step: usize) -> Result<QuasiDistribution> {
    if step >= q.n() {
        return Err(Error::validation(format!("step {step} out of range for {} steps", q.n())));
    }
    let mut supports = q.supports.clone();
    supports.remove(step);
    let mut atoms = BTreeMap::new();
    for (k, &w) in &q.atoms {
        let mut key = k.clone();
        key.remove(step);
        *atoms.entry(key).or_insert(0.0) += w;
    }
    Ok(QuasiDistribution { supports, atoms }.prune())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuasiOptions {
    /// Maximum number of branch nodes visited during enumeration.
    pub atom_limit: usize,
    pub exec: Exec,
}

impl Default for QuasiOptions {
    fn default() -> Self {
        Self { atom_limit: DEFAULT_ATOM_LIMIT, exec: Exec::default() }
    }
}

/// Markovian quasiprobability `Q(a₁…aₙ) = Tr[Pₙ(aₙ)…P₁(a₁)(ρ̂)]`.
pub fn quasi_distribution(
    state: &DensityState,
    schedule: &Schedule,
    opts: QuasiOptions,
) -> Result<QuasiDistribution> {
    if state.dim() != schedule.dim() {
        return Err(Error::DimensionMismatch { expected: schedule.dim(), found: state.dim() });
    }
    let families: Vec<DeltaFamily> =
        schedule.evolved_observables()?.iter().map(DeltaFamily::new).collect();
    let supports: Vec<Vec<f64>> = families.iter().map(|f| f.values.clone()).collect();

    if families.is_empty() {
        let mut atoms = BTreeMap::new();
        atoms.insert(Vec::new(), linalg::trace(state.matrix()).re);
        return Ok(QuasiDistribution { supports, atoms });
    }

    let visited = AtomicUsize::new(0);
    let walker = Walker { families: &families, visited: &visited, limit: opts.atom_limit };
    let first = &families[0];
    let branches = exec::map_range(opts.exec, first.values.len(), |k| {
        let mut out = Vec::new();
        walker.descend(0, k, state.matrix(), &mut Vec::with_capacity(families.len()), &mut out)?;
        Ok::<_, Error>(out)
    });

    let mut atoms = BTreeMap::new();
    for branch in branches {
        for (key, w) in branch? {
            *atoms.entry(key).or_insert(0.0) += w;
        }
    }
    Ok(QuasiDistribution { supports, atoms }.prune())
}

struct Walker<'a> {
    families: &'a [DeltaFamily],
    visited: &'a AtomicUsize,
    limit: usize,
}

impl Walker<'_> {
    fn descend(
        &self,
        step: usize,
        k: usize,
        x: &CMatrix,
        prefix: &mut Vec<u32>,
        out: &mut Vec<(Vec<u32>, f64)>,
    ) -> Result<()> {
        if self.visited.fetch_add(1, Ordering::Relaxed) >= self.limit {
            return Err(Error::ResourceLimit {
                what: "quasiprobability branch enumeration".into(),
                bound: self.limit,
            });
        }
        let family = &self.families[step];
        prefix.push(k as u32);
        if step + 1 == self.families.len() {
            let w = family.traced(k, x);
            if w.abs() >= PRUNE_TOL {
                out.push((prefix.clone(), w));
            }
        } else {
            let y = family.project(k, x);
            if linalg::max_abs(&y) >= PRUNE_TOL {
                for next in 0..self.families[step + 1].values.len() {
                    self.descend(step + 1, next, &y, prefix, out)?;
                }
            }
        }
        prefix.pop();
        Ok(())
    }
}

/// Memory kernels on integer time lags `Δ = t_observation − t_insertion`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryKernel {
    #[serde(default)]
    pub f: BTreeMap<i64, f64>,
    #[serde(default = "identity_g")]
    pub g: BTreeMap<i64, f64>,
}

fn identity_g() -> BTreeMap<i64, f64> {
    BTreeMap::from([(0, 1.0)])
}

impl Default for MemoryKernel {
    fn default() -> Self {
        Self::markovian()
    }
}

impl MemoryKernel {
    /// `f ≡ 0`, `g` the identity kernel.
    pub fn markovian() -> Self {
        Self { f: BTreeMap::new(), g: identity_g() }
    }

    pub fn with_f(f: BTreeMap<i64, f64>) -> Self {
        Self { f, g: identity_g() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((lag, _)) = self.g.iter().find(|(&lag, &w)| lag < 0 && w != 0.0) {
            return Err(Error::validation(format!("g kernel is not causal: entry at lag {lag}")));
        }
        if self.f.values().chain(self.g.values()).any(|w| !w.is_finite()) {
            return Err(Error::validation("kernel weights must be finite"));
        }
        Ok(())
    }
}

/// Integer grid for schedule times: `t = origin + unit · index`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    pub origin: f64,
    pub unit: f64,
    pub indices: Vec<i64>,
}

const MAX_GRID_INDEX: f64 = 1e6;

pub fn time_grid(times: &[f64]) -> Result<TimeGrid> {
    let origin = times.iter().copied().fold(f64::INFINITY, f64::min);
    if times.is_empty() {
        return Ok(TimeGrid { origin: 0.0, unit: 1.0, indices: Vec::new() });
    }
    let diffs: Vec<f64> = times.iter().map(|t| t - origin).collect();
    let span = diffs.iter().copied().fold(0.0, f64::max);
    let unit = if span == 0.0 {
        1.0
    } else {
        let tol = 1e-9 * span;
        diffs.iter().copied().filter(|d| *d > tol).fold(0.0, |g, d| real_gcd(g, d, tol))
    };
    let mut indices = Vec::with_capacity(diffs.len());
    for d in diffs {
        let r = d / unit;
        if r > MAX_GRID_INDEX || (r - r.round()).abs() > 1e-6 {
            return Err(Error::validation(format!(
                "schedule times are not representable on an integer grid (unit {unit:e})"
            )));
        }
        indices.push(r.round() as i64);
    }
    Ok(TimeGrid { origin, unit, indices })
}

fn real_gcd(mut a: f64, mut b: f64, tol: f64) -> f64 {
    if a < b {
        std::mem::swap(&mut a, &mut b);
    }
    while b > tol {
        let mut r = a % b;
        if r <= tol || b - r <= tol {
            r = 0.0;
        }
        a = b;
        b = r;
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    C,
    Q,
}

#[derive(Clone, Debug)]
struct Insertion {
    time: i64,
    step: usize,
    kind: Kind,
    slot: usize,
    coeff: f64,
    operator: std::rc::Rc<CMatrix>,
}

/// Time-ordered correlator `⟨a_{s1}⋯a_{sm}⟩_Q` with memory kernel.
///
/// Each selected observation at grid time `t` expands into
/// `Σ_Δ g[Δ] Ǎᶜ(t−Δ) + ½ f[Δ] Ǎ^q(t−Δ)`; every term of the multilinear
/// expansion is ordered by insertion time (earliest acts first on `ρ̂`, ties by
/// step index then `c` before `q`) and traced. Selection entries may repeat.
pub fn q_correlator(
    state: &DensityState,
    schedule: &Schedule,
    kernel: &MemoryKernel,
    selection: &[usize],
) -> Result<f64> {
    kernel.validate()?;
    if state.dim() != schedule.dim() {
        return Err(Error::DimensionMismatch { expected: schedule.dim(), found: state.dim() });
    }
    if let Some(&bad) = selection.iter().find(|&&s| s >= schedule.len()) {
        return Err(Error::validation(format!("selection refers to missing step {bad}")));
    }
    let times: Vec<f64> = schedule.steps().iter().map(|s| s.time).collect();
    let grid = time_grid(&times)?;

    let mut cache: BTreeMap<(usize, i64), std::rc::Rc<CMatrix>> = BTreeMap::new();
    let mut options: Vec<Vec<Insertion>> = Vec::with_capacity(selection.len());
    for (slot, &s) in selection.iter().enumerate() {
        let step = schedule.steps()[s];
        let t_obs = grid.indices[s];
        let mut opts = Vec::new();
        let entries = kernel
            .g
            .iter()
            .map(|(&lag, &w)| (lag, w, Kind::C))
            .chain(kernel.f.iter().map(|(&lag, &w)| (lag, 0.5 * w, Kind::Q)));
        for (lag, coeff, kind) in entries {
            if coeff == 0.0 {
                continue;
            }
            let time = t_obs - lag;
            let operator = match cache.get(&(step.observable, time)) {
                Some(op) => op.clone(),
                None => {
                    let t = grid.origin + grid.unit * time as f64;
                    let op = std::rc::Rc::new(schedule.observable_at(step.observable, t)?.matrix().clone());
                    cache.insert((step.observable, time), op.clone());
                    op
                }
            };
            opts.push(Insertion { time, step: s, kind, slot, coeff, operator });
        }
        options.push(opts);
    }

    let mut total = 0.0;
    let mut warned = false;
    let mut choice = vec![0usize; options.len()];
    if options.iter().any(Vec::is_empty) {
        return Ok(0.0);
    }
    loop {
        let mut term: Vec<&Insertion> = choice.iter().zip(&options).map(|(&i, o)| &o[i]).collect();
        term.sort_by_key(|ins| (ins.time, ins.step, ins.kind, ins.slot));
        if !warned && has_noncommuting_tie(&term) {
            log::warn!("equal-time insertions with non-commuting operators; using step-index order");
            warned = true;
        }
        let mut x = state.matrix().clone();
        let mut coeff = 1.0;
        for ins in &term {
            let a = ins.operator.as_ref();
            x = match ins.kind {
                Kind::C => (a * &x + &x * a) * C64::new(0.5, 0.0),
                Kind::Q => (a * &x - &x * a) * C64::new(0.0, -1.0),
            };
            coeff *= ins.coeff;
        }
        total += coeff * linalg::trace(&x).re;

        // next multi-index
        let mut pos = 0;
        loop {
            if pos == choice.len() {
                return Ok(total);
            }
            choice[pos] += 1;
            if choice[pos] < options[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

fn has_noncommuting_tie(term: &[&Insertion]) -> bool {
    term.windows(2).any(|w| {
        w[0].time == w[1].time && w[0].step != w[1].step && {
            let (a, b) = (w[0].operator.as_ref(), w[1].operator.as_ref());
            linalg::max_abs(&(a * b - b * a)) > 1e-12
        }
    })
}
