//! Classical noise models and the convolution `P = N ∗ Q`.
//!
//! For a finitely supported `Q` the convolution is a finite sum of shifted
//! noise densities, evaluated here in closed form with log-sum-exp
//! accumulation so that long sequences and far tails keep their sign.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::linalg::DensityState;
use crate::models;
use crate::quasiprob::{quasi_distribution, QuasiDistribution, QuasiOptions, OUTCOME_TOL};

/// Relative rounding bound for a convolution sum: a value is trusted to be
/// negative when it lies below `−10 · EVAL_REL_TOL · Σ|wₖ Nₖ|`.
pub const EVAL_REL_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_GRID_POINTS: usize = 50_000_000;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One-dimensional zero-centered noise density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseFactor {
    /// `(2πv)^{-1/2} e^{−u²/2v}`
    Gaussian { variance: f64 },
    /// `(α/2) e^{−α|u|}`
    Laplace { rate: f64 },
}

impl NoiseFactor {
    /// Gaussian written as `∝ e^{−αu²}`.
    pub fn gaussian_exponent(alpha: f64) -> Self {
        NoiseFactor::Gaussian { variance: 0.5 / alpha }
    }

    pub fn validate(&self) -> Result<()> {
        let p = match *self {
            NoiseFactor::Gaussian { variance } => variance,
            NoiseFactor::Laplace { rate } => rate,
        };
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::validation(format!("noise parameter must be positive, got {p}")));
        }
        Ok(())
    }

    pub fn ln_density(&self, u: f64) -> f64 {
        match *self {
            NoiseFactor::Gaussian { variance } => {
                -0.5 * u * u / variance - 0.5 * (2.0 * std::f64::consts::PI * variance).ln()
            }
            NoiseFactor::Laplace { rate } => (0.5 * rate).ln() - rate * u.abs(),
        }
    }

    pub fn density(&self, u: f64) -> f64 {
        self.ln_density(u).exp()
    }

    /// `E[e^{iku}]`, real for symmetric densities.
    pub fn characteristic(&self, k: f64) -> f64 {
        match *self {
            NoiseFactor::Gaussian { variance } => (-0.5 * variance * k * k).exp(),
            NoiseFactor::Laplace { rate } => rate * rate / (rate * rate + k * k),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseFactor::Gaussian { variance } => variance,
            NoiseFactor::Laplace { rate } => 2.0 / (rate * rate),
        }
    }

    /// Location of the maximum.
    pub fn mode(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseGroup {
    pub members: Vec<usize>,
    pub factor: NoiseFactor,
}

/// Noise density `N` over the outcome variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    GaussianProduct { variances: Vec<f64> },
    LaplaceProduct { rates: Vec<f64> },
    /// One factor per group; all members of a group carry the same noise
    /// value (`N₀(b₁)δ(b₁ − b₂)⋯`).
    DeltaCorrelatedGroups { groups: Vec<NoiseGroup> },
}

impl NoiseModel {
    /// `N ∝ Π e^{−αᵢuᵢ²}`.
    pub fn gaussian_exponents(alphas: &[f64]) -> Self {
        NoiseModel::GaussianProduct { variances: alphas.iter().map(|a| 0.5 / a).collect() }
    }

    pub fn from_factors(factors: &[NoiseFactor]) -> Result<Self> {
        if let Some(variances) = factors
            .iter()
            .map(|f| match f {
                NoiseFactor::Gaussian { variance } => Some(*variance),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
        {
            return Ok(NoiseModel::GaussianProduct { variances });
        }
        if let Some(rates) = factors
            .iter()
            .map(|f| match f {
                NoiseFactor::Laplace { rate } => Some(*rate),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
        {
            return Ok(NoiseModel::LaplaceProduct { rates });
        }
        // Mixed kinds: singleton groups.
        Ok(NoiseModel::DeltaCorrelatedGroups {
            groups: factors
                .iter()
                .enumerate()
                .map(|(i, &factor)| NoiseGroup { members: vec![i], factor })
                .collect(),
        })
    }

    pub fn n_vars(&self) -> usize {
        match self {
            NoiseModel::GaussianProduct { variances } => variances.len(),
            NoiseModel::LaplaceProduct { rates } => rates.len(),
            NoiseModel::DeltaCorrelatedGroups { groups } => groups.iter().map(|g| g.members.len()).sum(),
        }
    }

    /// Per-variable factors for product models.
    pub fn factors(&self) -> Option<Vec<NoiseFactor>> {
        match self {
            NoiseModel::GaussianProduct { variances } => {
                Some(variances.iter().map(|&variance| NoiseFactor::Gaussian { variance }).collect())
            }
            NoiseModel::LaplaceProduct { rates } => {
                Some(rates.iter().map(|&rate| NoiseFactor::Laplace { rate }).collect())
            }
            NoiseModel::DeltaCorrelatedGroups { .. } => None,
        }
    }

    fn groups(&self) -> Vec<NoiseGroup> {
        match self {
            NoiseModel::DeltaCorrelatedGroups { groups } => groups.clone(),
            _ => self
                .factors()
                .unwrap()
                .into_iter()
                .enumerate()
                .map(|(i, factor)| NoiseGroup { members: vec![i], factor })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let groups = self.groups();
        let n = self.n_vars();
        let mut seen = vec![false; n];
        for g in &groups {
            g.factor.validate()?;
            if g.members.is_empty() {
                return Err(Error::validation("noise group has no members"));
            }
            for &m in &g.members {
                if m >= n || seen[m] {
                    return Err(Error::validation(format!(
                        "noise groups must partition variables 0..{n}; bad member {m}"
                    )));
                }
                seen[m] = true;
            }
        }
        Ok(())
    }

    /// Characteristic function `E[e^{i k·u}]`.
    pub fn characteristic(&self, k: &[f64]) -> f64 {
        self.groups()
            .iter()
            .map(|g| g.factor.characteristic(g.members.iter().map(|&m| k[m]).sum()))
            .product()
    }

    /// Per-variable variances (members of a group share their group's).
    pub fn variances(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vars()];
        for g in self.groups() {
            for &m in &g.members {
                out[m] = g.factor.variance();
            }
        }
        out
    }
}

/// `P = N ∗ Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvolvedDensity {
    q: QuasiDistribution,
    noise: NoiseModel,
}

impl ConvolvedDensity {
    pub fn new(q: QuasiDistribution, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        if noise.n_vars() != q.n() {
            return Err(Error::DimensionMismatch { expected: q.n(), found: noise.n_vars() });
        }
        Ok(Self { q, noise })
    }

    pub fn q(&self) -> &QuasiDistribution {
        &self.q
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Mean of `P`: mean of `Q` plus the (zero) noise mean.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.q.n();
        (0..n)
            .map(|i| {
                let mut e = vec![0u32; n];
                e[i] = 1;
                self.q.moment(&e)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DensityValue {
    Value(f64),
    /// The point lies on no sheet of a delta-correlated density.
    OffSupport,
}

impl DensityValue {
    pub fn value(self) -> Option<f64> {
        match self {
            DensityValue::Value(v) => Some(v),
            DensityValue::OffSupport => None,
        }
    }
}

/// A real number as sign and log-magnitude, with the log of the sum of
/// absolute term magnitudes for rounding assessment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedLog {
    pub sign: i8,
    pub ln_abs: f64,
    pub ln_scale: f64,
}

impl SignedLog {
    pub fn value(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.ln_abs.exp()
        }
    }

    /// Negative beyond ten times the relative rounding bound.
    pub fn is_verified_negative(&self) -> bool {
        self.sign < 0 && self.ln_abs - self.ln_scale > (10.0 * EVAL_REL_TOL).ln()
    }

    pub fn is_verified_positive(&self) -> bool {
        self.sign > 0 && self.ln_abs - self.ln_scale > (10.0 * EVAL_REL_TOL).ln()
    }
}

/// `Σ wₖ e^{ℓₖ}` in log space.
pub fn signed_log_sum(terms: impl Iterator<Item = (f64, f64)> + Clone) -> SignedLog {
    let max = terms.clone().filter(|(w, _)| *w != 0.0).map(|(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return SignedLog { sign: 0, ln_abs: f64::NEG_INFINITY, ln_scale: f64::NEG_INFINITY };
    }
    let (mut sum, mut abs) = (0.0, 0.0);
    for (w, l) in terms {
        let e = (l - max).exp();
        sum += w * e;
        abs += w.abs() * e;
    }
    let sign = if sum > 0.0 {
        1
    } else if sum < 0.0 {
        -1
    } else {
        0
    };
    SignedLog { sign, ln_abs: sum.abs().ln() + max, ln_scale: abs.ln() + max }
}

fn check_point(p: &ConvolvedDensity, point: &[f64]) -> Result<()> {
    if point.len() != p.q.n() {
        return Err(Error::DimensionMismatch { expected: p.q.n(), found: point.len() });
    }
    if point.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("evaluation point must be finite"));
    }
    Ok(())
}

/// `P(point)` as a signed logarithm; `None` when off every delta sheet.
pub fn density_log_eval(p: &ConvolvedDensity, point: &[f64]) -> Result<Option<SignedLog>> {
    check_point(p, point)?;
    let atoms: Vec<(Vec<f64>, f64)> = p.q.atoms().collect();
    match &p.noise {
        NoiseModel::DeltaCorrelatedGroups { groups } => {
            let mut terms = Vec::new();
            for (x, w) in &atoms {
                let mut ln = 0.0;
                let mut compatible = true;
                for g in groups {
                    let u0 = point[g.members[0]] - x[g.members[0]];
                    if g.members.iter().any(|&m| ((point[m] - x[m]) - u0).abs() > OUTCOME_TOL) {
                        compatible = false;
                        break;
                    }
                    ln += g.factor.ln_density(u0);
                }
                if compatible {
                    terms.push((*w, ln));
                }
            }
            if terms.is_empty() {
                return Ok(None);
            }
            Ok(Some(signed_log_sum(terms.into_iter())))
        }
        _ => {
            let factors = p.noise.factors().unwrap();
            let terms = atoms.iter().map(|(x, w)| {
                let ln: f64 = factors.iter().zip(point).zip(x).map(|((f, y), a)| f.ln_density(y - a)).sum();
                (*w, ln)
            });
            Ok(Some(signed_log_sum(terms)))
        }
    }
}

/// `P(point) = Σ_atoms w · N(point − outcomes)`. For delta-correlated
/// models the result is the density on the sheet through `point`.
pub fn density_eval(p: &ConvolvedDensity, point: &[f64]) -> Result<DensityValue> {
    Ok(match density_log_eval(p, point)? {
        Some(s) => DensityValue::Value(s.value()),
        None => DensityValue::OffSupport,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PositiveOnDecisionSet,
    NegativeWitness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub value: f64,
    pub ln_abs_value: f64,
    pub region: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionCheck {
    pub region: String,
    pub method: String,
    pub points: usize,
    /// Smallest value found, relative to the local term magnitude.
    pub min_relative_value: Option<f64>,
    pub negative: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub domination_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
    pub grid_step: f64,
    pub eval_tolerance: f64,
    pub regions_checked: Vec<RegionCheck>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositivityOptions {
    /// Distance added beyond the support on each side; default depends on
    /// the noise kind.
    pub box_margin: Option<f64>,
    pub grid_step: Option<f64>,
    pub max_grid_points: usize,
    pub exec: Exec,
}

impl Default for PositivityOptions {
    fn default() -> Self {
        Self { box_margin: None, grid_step: None, max_grid_points: DEFAULT_MAX_GRID_POINTS, exec: Exec::default() }
    }
}

/// `5/min(rate)` for Laplace, `6·max(σ)` for Gaussian.
pub fn default_box_margin(factors: &[NoiseFactor]) -> f64 {
    factors
        .iter()
        .map(|f| match *f {
            NoiseFactor::Gaussian { variance } => 6.0 * variance.sqrt(),
            NoiseFactor::Laplace { rate } => 5.0 / rate,
        })
        .fold(0.0, f64::max)
}

/// Step over which every factor changes by less than 5% inside the box.
pub fn default_grid_step(factors: &[NoiseFactor]) -> f64 {
    let raw = factors
        .iter()
        .map(|f| match *f {
            NoiseFactor::Gaussian { variance } => variance.sqrt() / 120.0,
            NoiseFactor::Laplace { rate } => 0.05 / rate,
        })
        .fold(f64::INFINITY, f64::min);
    align_step(raw)
}

/// Shrink to `1/k` (or an integer) so that integer outcomes lie on the grid.
fn align_step(h: f64) -> f64 {
    if h < 1.0 {
        1.0 / (1.0 / h).ceil()
    } else {
        h.floor()
    }
}

#[derive(Clone, Copy, Debug)]
struct Axis {
    first: i64,
    count: usize,
    step: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, step: f64) -> Self {
        let first = (lo / step).floor() as i64;
        let last = (hi / step).ceil() as i64;
        Axis { first, count: (last - first + 1) as usize, step }
    }

    fn at(&self, k: usize) -> f64 {
        (self.first + k as i64) as f64 * self.step
    }
}

#[derive(Clone, Debug)]
struct ScanResult {
    points: usize,
    min_rel: f64,
    min_at: Vec<f64>,
    negative: Option<(Vec<f64>, SignedLog)>,
}

impl ScanResult {
    fn empty() -> Self {
        ScanResult { points: 0, min_rel: f64::INFINITY, min_at: Vec::new(), negative: None }
    }

    fn offer(&mut self, at: &[f64], s: SignedLog) {
        self.points += 1;
        let rel = if s.sign == 0 { 0.0 } else { f64::from(s.sign) * (s.ln_abs - s.ln_scale).exp() };
        if rel < self.min_rel {
            self.min_rel = rel;
            self.min_at = at.to_vec();
        }
        if s.is_verified_negative() {
            let better = match &self.negative {
                None => true,
                Some((_, best)) => s.value() < best.value(),
            };
            if better {
                self.negative = Some((at.to_vec(), s));
            }
        }
    }

    /// Later partials lose ties, which keeps the lexicographically first point.
    fn merge(mut self, other: ScanResult) -> Self {
        self.points += other.points;
        if other.min_rel < self.min_rel {
            self.min_rel = other.min_rel;
            self.min_at = other.min_at;
        }
        if let Some((p, s)) = other.negative {
            let better = match &self.negative {
                None => true,
                Some((_, best)) => s.value() < best.value(),
            };
            if better {
                self.negative = Some((p, s));
            }
        }
        self
    }
}

/// Evaluate `f` on the tensor grid of `axes`, parallel over the first axis.
fn scan<F>(exec: Exec, axes: &[Axis], f: F) -> ScanResult
where
    F: Fn(&[f64]) -> SignedLog + Sync + Send,
{
    if axes.is_empty() {
        let mut r = ScanResult::empty();
        r.offer(&[], f(&[]));
        return r;
    }
    let partials = exec::map_range(exec, axes[0].count, |k0| {
        let mut r = ScanResult::empty();
        let mut idx = vec![0usize; axes.len()];
        idx[0] = k0;
        let mut point: Vec<f64> = axes.iter().zip(&idx).map(|(a, &k)| a.at(k)).collect();
        loop {
            r.offer(&point, f(&point));
            let mut d = axes.len() - 1;
            loop {
                if d == 0 {
                    return r;
                }
                idx[d] += 1;
                if idx[d] < axes[d].count {
                    point[d] = axes[d].at(idx[d]);
                    break;
                }
                idx[d] = 0;
                point[d] = axes[d].at(0);
                d -= 1;
            }
        }
    });
    partials.into_iter().fold(ScanResult::empty(), ScanResult::merge)
}

/// Exhaustive sign decision on a box grid plus every tail orthant.
///
/// A tail region fixes a subset `S` of coordinates beyond the box with signs
/// `s`. Laplace tails factor exactly beyond the support, so the sign of `P`
/// there equals the sign of the reduced function over the remaining
/// coordinates. Gaussian tails are reduced to the atoms extreme in every
/// direction of `S`, which dominate beyond the reported radius.
pub fn positivity_decide(p: &ConvolvedDensity, opts: PositivityOptions) -> Result<PositivityReport> {
    let factors = p
        .noise
        .factors()
        .ok_or_else(|| Error::validation("positivity decision requires a Gaussian or Laplace product model"))?;
    let n = p.q.n();
    let atoms: Vec<(Vec<f64>, f64)> = p.q.atoms().collect();
    let mut warnings = Vec::new();

    let margin = opts.box_margin.unwrap_or_else(|| default_box_margin(&factors));
    let default_step = default_grid_step(&factors);
    let step = match opts.grid_step {
        Some(h) => {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::validation("grid step must be positive"));
            }
            if h > default_step * (1.0 + 1e-12) {
                warnings.push(format!(
                    "grid step {h} exceeds {default_step}; noise factors may vary by more than 5% per cell"
                ));
            }
            h
        }
        None => default_step,
    };
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::validation("box margin must be nonnegative"));
    }

    let supports = p.q.supports();
    let lower: Vec<f64> = (0..n).map(|i| supports[i].first().copied().unwrap_or(0.0) - margin).collect();
    let upper: Vec<f64> = (0..n).map(|i| supports[i].last().copied().unwrap_or(0.0) + margin).collect();
    let axes: Vec<Axis> = (0..n).map(|i| Axis::new(lower[i], upper[i], step)).collect();

    let total: f64 = axes.iter().map(|a| a.count as f64).product();
    if total > opts.max_grid_points as f64 {
        return Err(Error::ResourceLimit {
            what: format!("positivity grid with {total:.0} points"),
            bound: opts.max_grid_points,
        });
    }

    let mut regions = Vec::new();
    let mut witness: Option<Witness> = None;

    let boxed = scan(opts.exec, &axes, |x| {
        let terms = atoms.iter().map(|(a, w)| {
            (*w, factors.iter().zip(x).zip(a).map(|((f, y), ai)| f.ln_density(y - ai)).sum::<f64>())
        });
        signed_log_sum(terms)
    });
    regions.push(RegionCheck {
        region: "box".into(),
        method: "grid".into(),
        points: boxed.points,
        min_relative_value: Some(boxed.min_rel),
        negative: boxed.negative.is_some(),
        domination_radius: None,
    });
    if let Some((point, s)) = boxed.negative {
        witness = Some(Witness { point, value: s.value(), ln_abs_value: s.ln_abs, region: "box".into() });
    }

    let laplace = matches!(p.noise, NoiseModel::LaplaceProduct { .. });
    for mask in 1u32..(1 << n) {
        let in_s: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let rest: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
        for signs in 0u32..(1 << in_s.len()) {
            let s: Vec<f64> =
                (0..in_s.len()).map(|k| if signs & (1 << k) != 0 { 1.0 } else { -1.0 }).collect();
            let name = tail_name(&in_s, &s);
            let ext: Vec<f64> = in_s
                .iter()
                .zip(&s)
                .map(|(&i, &si)| if si > 0.0 { *supports[i].last().unwrap() } else { supports[i][0] })
                .collect();

            // (weight, ln tail coefficient, atom) for atoms that survive.
            let reduced: Vec<(f64, f64, &Vec<f64>)> = atoms
                .iter()
                .filter_map(|(a, w)| {
                    if laplace {
                        let ln: f64 = in_s
                            .iter()
                            .zip(&s)
                            .zip(&ext)
                            .map(|((&i, &si), &e)| match factors[i] {
                                NoiseFactor::Laplace { rate } => rate * si * (a[i] - e),
                                _ => unreachable!(),
                            })
                            .sum();
                        Some((*w, ln, a))
                    } else {
                        let dominant = in_s.iter().zip(&ext).all(|(&i, &e)| (a[i] - e).abs() <= OUTCOME_TOL);
                        dominant.then_some((*w, 0.0, a))
                    }
                })
                .collect();

            if reduced.is_empty() {
                warnings.push(format!("tail {name}: no atom is extreme in every direction; sign undetermined"));
                regions.push(RegionCheck {
                    region: name,
                    method: "indeterminate".into(),
                    points: 0,
                    min_relative_value: None,
                    negative: false,
                    domination_radius: None,
                });
                continue;
            }

            let rest_axes: Vec<Axis> = rest.iter().map(|&i| axes[i]).collect();
            let g = |y: &[f64]| {
                signed_log_sum(reduced.iter().map(|(w, ln, a)| {
                    let lr: f64 = rest.iter().zip(y).map(|(&i, yi)| factors[i].ln_density(yi - a[i])).sum();
                    (*w, ln + lr)
                }))
            };
            let res = scan(opts.exec, &rest_axes, g);

            let domination_radius = if laplace {
                None
            } else {
                Some(gaussian_domination_radius(&atoms, &factors, &in_s, &s, &ext, &rest, &res, &reduced))
            };
            regions.push(RegionCheck {
                region: name.clone(),
                method: if laplace { "exact-tail".into() } else { "asymptotic-dominant-atom".into() },
                points: res.points,
                min_relative_value: Some(res.min_rel),
                negative: res.negative.is_some(),
                domination_radius,
            });

            if witness.is_none() {
                if let Some((y, _)) = &res.negative {
                    match tail_witness(p, &in_s, &s, &ext, &rest, y, margin.max(step))? {
                        Some(w) => witness = Some(Witness { region: name, ..w }),
                        None => warnings.push(format!(
                            "tail {name}: reduced function negative but no verified point found along the ray"
                        )),
                    }
                }
            }
        }
    }

    Ok(PositivityReport {
        verdict: if witness.is_some() { Verdict::NegativeWitness } else { Verdict::PositiveOnDecisionSet },
        witness,
        box_lower: axes.iter().map(|a| a.at(0)).collect(),
        box_upper: axes.iter().map(|a| a.at(a.count - 1)).collect(),
        grid_step: step,
        eval_tolerance: EVAL_REL_TOL,
        regions_checked: regions,
        warnings,
    })
}

fn tail_name(in_s: &[usize], s: &[f64]) -> String {
    let parts: Vec<String> =
        in_s.iter().zip(s).map(|(i, si)| format!("x{i}{}", if *si > 0.0 { "→+∞" } else { "→−∞" })).collect();
    format!("tail[{}]", parts.join(","))
}

/// Walk outward along the tail directions until the density is a verified
/// negative number.
fn tail_witness(
    p: &ConvolvedDensity,
    in_s: &[usize],
    s: &[f64],
    ext: &[f64],
    rest: &[usize],
    y: &[f64],
    start: f64,
) -> Result<Option<Witness>> {
    let n = p.q.n();
    let mut dist = start;
    for _ in 0..64 {
        let mut point = vec![0.0; n];
        for (k, &i) in rest.iter().enumerate() {
            point[i] = y[k];
        }
        for ((&i, &si), &e) in in_s.iter().zip(s).zip(ext) {
            point[i] = e + si * dist;
        }
        if let Some(v) = density_log_eval(p, &point)? {
            if v.is_verified_negative() {
                return Ok(Some(Witness { point, value: v.value(), ln_abs_value: v.ln_abs, region: String::new() }));
            }
        }
        dist *= 2.0;
    }
    Ok(None)
}

/// Distance beyond the extreme support value after which the dominant atoms
/// outweigh all others at every rest-grid point (∞ if the reduced function
/// vanishes somewhere on the grid).
#[allow(clippy::too_many_arguments)]
fn gaussian_domination_radius(
    atoms: &[(Vec<f64>, f64)],
    factors: &[NoiseFactor],
    in_s: &[usize],
    s: &[f64],
    ext: &[f64],
    rest: &[usize],
    res: &ScanResult,
    reduced: &[(f64, f64, &Vec<f64>)],
) -> f64 {
    // Smallest gap between the extreme value and any other support value.
    let mut suppression = f64::INFINITY;
    for ((&i, &si), &e) in in_s.iter().zip(s).zip(ext) {
        let var = factors[i].variance();
        for (a, _) in atoms {
            let gap = si * (e - a[i]);
            if gap > OUTCOME_TOL {
                suppression = suppression.min(gap / var);
            }
        }
    }
    if !suppression.is_finite() {
        return 0.0; // every atom is dominant
    }
    if res.min_rel == 0.0 || res.min_rel.is_nan() {
        return f64::INFINITY;
    }
    // Ratio of non-dominant to dominant absolute mass at the weakest point.
    let y = &res.min_at;
    let ln_rest = |a: &Vec<f64>| -> f64 {
        rest.iter().zip(y).map(|(&i, yi)| factors[i].ln_density(yi - a[i])).sum()
    };
    let dominant: f64 = reduced.iter().map(|(w, _, a)| w * ln_rest(a).exp()).sum::<f64>().abs();
    let others: f64 = atoms
        .iter()
        .filter(|(a, _)| !reduced.iter().any(|(_, _, r)| *r == a))
        .map(|(a, w)| w.abs() * ln_rest(a).exp())
        .sum();
    if dominant == 0.0 {
        return f64::INFINITY;
    }
    ((others / dominant).ln().max(0.0)) / suppression
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongSequenceReport {
    pub n_fail: Option<usize>,
    pub witness: Option<Vec<f64>>,
    pub value: Option<f64>,
    pub ln_abs_value: Option<f64>,
    pub n_max: usize,
}

/// Smallest `n ≤ n_max` for which `Â, B̂, …, B̂` (n steps) on `|+⟩⟨+|` with
/// independent per-step noise has `P(a₀, b₀, …, b₀) < 0`, where `a₀` and
/// `b₀ + 1` maximize the noise factors.
///
/// `per_step_noise` is a two-variable product model: the factor for `a` and
/// the factor repeated for every `b`.
pub fn long_sequence_failure(n_max: usize, per_step_noise: &NoiseModel) -> Result<LongSequenceReport> {
    let factors = per_step_noise
        .factors()
        .filter(|f| f.len() == 2)
        .ok_or_else(|| Error::validation("per-step noise must be a two-variable product model"))?;
    per_step_noise.validate()?;
    let (fa, fb) = (factors[0], factors[1]);
    let a0 = fa.mode();
    let b0 = fb.mode() - 1.0;
    let state = models::plus_state();

    for n in 2..=n_max {
        let mut order = vec![1usize; n];
        order[0] = 0;
        let q = quasi_distribution(&state, &models::ab_schedule(&order), QuasiOptions::default())?;
        let mut fs = vec![fa];
        fs.extend(std::iter::repeat_n(fb, n - 1));
        let p = ConvolvedDensity::new(q, NoiseModel::from_factors(&fs)?)?;
        let mut point = vec![b0; n];
        point[0] = a0;
        let v = density_log_eval(&p, &point)?.expect("product model");
        if v.is_verified_negative() {
            return Ok(LongSequenceReport {
                n_fail: Some(n),
                witness: Some(point),
                value: Some(v.value()),
                ln_abs_value: Some(v.ln_abs),
                n_max,
            });
        }
    }
    Ok(LongSequenceReport { n_fail: None, witness: None, value: None, ln_abs_value: None, n_max })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaCorrelatedReport {
    pub witness: Option<Vec<f64>>,
    pub value: Option<f64>,
}

/// Sequence `B̂, Â, B̂` with noise `N_a(a) N₀(b₁) δ(b₁ − b₂)`: evaluate the
/// sheet density at `(b − 1, a₀, b + 1)` with `a₀`, `b` the noise modes.
pub fn delta_correlated_failure(
    state: &DensityState,
    noise_a: NoiseFactor,
    noise_b: NoiseFactor,
) -> Result<DeltaCorrelatedReport> {
    let q = quasi_distribution(state, &models::ab_schedule(&[1, 0, 1]), QuasiOptions::default())?;
    let noise = NoiseModel::DeltaCorrelatedGroups {
        groups: vec![
            NoiseGroup { members: vec![0, 2], factor: noise_b },
            NoiseGroup { members: vec![1], factor: noise_a },
        ],
    };
    let p = ConvolvedDensity::new(q, noise)?;
    let (a0, b) = (noise_a.mode(), noise_b.mode());
    let point = vec![b - 1.0, a0, b + 1.0];
    Ok(match density_log_eval(&p, &point)? {
        Some(v) if v.is_verified_negative() => {
            DeltaCorrelatedReport { witness: Some(point), value: Some(v.value()) }
        }
        Some(v) => DeltaCorrelatedReport { witness: None, value: Some(v.value()) },
        None => DeltaCorrelatedReport { witness: None, value: None },
    })
}

/// Noise-strength scales in units of `e²/m⁴` (`e ≡ 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloorEstimate {
    pub particle_count: f64,
    pub box_side: f64,
    /// Observation time converted to meters.
    pub duration: f64,
    pub micro_length: f64,
    pub micro_time: f64,
    pub n_macro: f64,
    pub n_micro: f64,
}

/// Macroscopic fluctuation scale `N²/(L³ cT)` against the atomic scale
/// `1/(ℓ³ τ)`.
pub fn noise_floor_estimate(
    particle_count: f64,
    box_side: f64,
    duration_seconds: f64,
    micro_length: f64,
    micro_time_meters: f64,
) -> Result<NoiseFloorEstimate> {
    for (name, v) in [
        ("particle_count", particle_count),
        ("box_side", box_side),
        ("duration_seconds", duration_seconds),
        ("micro_length", micro_length),
        ("micro_time", micro_time_meters),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::validation(format!("{name} must be positive, got {v}")));
        }
    }
    let duration = duration_seconds * SPEED_OF_LIGHT;
    Ok(NoiseFloorEstimate {
        particle_count,
        box_side,
        duration,
        micro_length,
        micro_time: micro_time_meters,
        n_macro: particle_count * particle_count / (box_side.powi(3) * duration),
        n_micro: 1.0 / (micro_length.powi(3) * micro_time_meters),
    })
}
