//! Task implementations. Each returns a [`Report`] holding the JSON document
//! and the CSV table for the same result.

use qreal::linalg::jacobi_eigen;
use qreal::moments::{
    add_gaussian_noise, calibrate_gaussian_noise, cauchy_schwarz_check, moments_of_quasi, moments_to_cumulants,
    table1_probe, CalibrationOptions, CalibrationResult, CauchySchwarz, CumulantTable, MomentTable, Polynomial,
};
use qreal::noise::{
    density_eval, long_sequence_failure, noise_floor_estimate, positivity_decide, ConvolvedDensity, DensityValue,
    NoiseFactor, NoiseModel, PositivityOptions, DEFAULT_MAX_GRID_POINTS,
};
use qreal::quasiprob::{quasi_distribution, QuasiDistribution, QuasiOptions, DEFAULT_ATOM_LIMIT};
use qreal::weakmeas::{weak_limit, DEFAULT_ETAS};
use qreal::{models, Exec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::{Cell, Report, Table};
use crate::scenario::Loaded;

pub const TASKS: [&str; 10] = [
    "quasi",
    "convolve-eval",
    "positivity",
    "long-sequence",
    "moments",
    "calibrate",
    "cs-check",
    "weak-limit",
    "noise-floor",
    "table1-demo",
];

/// Tasks that run without a scenario file.
pub fn is_builtin(task: &str) -> bool {
    matches!(task, "noise-floor" | "table1-demo")
}

/// Work bounds, overridable with `--limits`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub atoms: usize,
    pub grid: usize,
    pub scan: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { atoms: DEFAULT_ATOM_LIMIT, grid: DEFAULT_MAX_GRID_POINTS, scan: 10_000_000 }
    }
}

impl Limits {
    /// Parse `key=value[,key=value…]` on top of the defaults.
    pub fn parse(spec: &str) -> CliResult<Self> {
        let mut limits = Limits::default();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::validation(format!("--limits entry '{item}' is not key=value")))?;
            let n: usize = value
                .trim()
                .replace('_', "")
                .parse()
                .map_err(|_| CliError::validation(format!("--limits {key}: '{value}' is not a count")))?;
            if n == 0 {
                return Err(CliError::validation(format!("--limits {key} must be positive")));
            }
            match key.trim() {
                "atoms" => limits.atoms = n,
                "grid" => limits.grid = n,
                "scan" => limits.scan = n,
                other => return Err(CliError::validation(format!("unknown limit '{other}' (expected atoms, grid, scan)"))),
            }
        }
        Ok(limits)
    }

    fn quasi(&self) -> QuasiOptions {
        QuasiOptions { atom_limit: self.atoms, exec: Exec::Parallel }
    }
}

pub fn run_task(task: &str, scenario: Option<&Loaded>, limits: Limits) -> CliResult<Report> {
    if is_builtin(task) {
        let builtin = match task {
            "noise-floor" => {
                let opts = match scenario {
                    Some(s) => s.options(task)?,
                    None => NoiseFloorOptions::default(),
                };
                noise_floor(&opts)
            }
            _ => table1_demo(),
        };
        return builtin;
    }
    if !TASKS.contains(&task) {
        return Err(CliError::validation(format!("unknown task '{task}' (expected one of {})", TASKS.join(", "))));
    }
    let s = scenario.ok_or_else(|| CliError::validation(format!("task '{task}' needs --scenario")))?;
    match task {
        "quasi" => quasi(s, limits),
        "convolve-eval" => convolve_eval(s, &s.options(task)?, limits),
        "positivity" => positivity(s, &s.options(task)?, limits),
        "long-sequence" => long_sequence(s, &s.options(task)?),
        "moments" => moments(s, &s.options(task)?, limits),
        "calibrate" => calibrate(s, &s.options(task)?, limits),
        "cs-check" => cs_check(s, &s.options(task)?, limits),
        "weak-limit" => weak(s, &s.options(task)?),
        _ => unreachable!("task list checked above"),
    }
}

fn distribution(s: &Loaded, limits: Limits) -> CliResult<QuasiDistribution> {
    Ok(quasi_distribution(s.state()?, s.schedule()?, limits.quasi())?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub outcomes: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiReport {
    pub steps: Vec<String>,
    pub atoms: Vec<Atom>,
    pub total_weight: f64,
}

fn quasi(s: &Loaded, limits: Limits) -> CliResult<Report> {
    let q = distribution(s, limits)?;
    let report = QuasiReport {
        steps: s.step_labels(),
        atoms: q.atoms().map(|(outcomes, weight)| Atom { outcomes, weight }).collect(),
        total_weight: q.total_weight(),
    };
    let mut header: Vec<String> = (0..q.n()).map(|k| format!("x{k}")).collect();
    header.push("weight".into());
    let mut table = Table { header, rows: Vec::new() };
    for atom in &report.atoms {
        let mut row: Vec<Cell> = atom.outcomes.iter().map(|&x| x.into()).collect();
        row.push(atom.weight.into());
        table.push(row);
    }
    Report::new(&report, table)
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvolveOptions {
    pub points: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointValue {
    pub point: Vec<f64>,
    pub value: DensityValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvolveReport {
    pub steps: Vec<String>,
    pub values: Vec<PointValue>,
}

fn convolved(s: &Loaded, limits: Limits) -> CliResult<ConvolvedDensity> {
    let q = distribution(s, limits)?;
    Ok(ConvolvedDensity::new(q, s.noise()?.clone())?)
}

fn convolve_eval(s: &Loaded, opts: &ConvolveOptions, limits: Limits) -> CliResult<Report> {
    let p = convolved(s, limits)?;
    let n = p.q().n();
    let mut values = Vec::with_capacity(opts.points.len());
    for (i, point) in opts.points.iter().enumerate() {
        let path = || format!("{}.points[{i}]", s.task_path("convolve-eval"));
        if point.len() != n {
            return Err(CliError::at(path(), format!("expected {n} coordinates, got {}", point.len())));
        }
        let value = density_eval(&p, point).map_err(|e| CliError::from(e).with_path(path()))?;
        values.push(PointValue { point: point.clone(), value });
    }
    let mut header: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
    header.extend(["value".to_string(), "off_support".to_string()]);
    let mut table = Table { header, rows: Vec::new() };
    for pv in &values {
        let mut row: Vec<Cell> = pv.point.iter().map(|&x| x.into()).collect();
        row.push(pv.value.value().into());
        row.push(matches!(pv.value, DensityValue::OffSupport).into());
        table.push(row);
    }
    Report::new(&ConvolveReport { steps: s.step_labels(), values }, table)
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositivityTaskOptions {
    pub box_margin: Option<f64>,
    pub grid_step: Option<f64>,
}

fn positivity(s: &Loaded, opts: &PositivityTaskOptions, limits: Limits) -> CliResult<Report> {
    let p = convolved(s, limits)?;
    let o = PositivityOptions {
        box_margin: opts.box_margin,
        grid_step: opts.grid_step,
        max_grid_points: limits.grid,
        exec: Exec::Parallel,
    };
    Report::record(&positivity_decide(&p, o)?)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongSequenceOptions {
    pub n_max: usize,
    /// Noise on the first (`Â`) step; defaults to the scenario's first factor.
    pub noise_a: Option<NoiseFactor>,
    /// Noise on every later (`B̂`) step; defaults to the scenario's second factor.
    pub noise_b: Option<NoiseFactor>,
}

impl Default for LongSequenceOptions {
    fn default() -> Self {
        LongSequenceOptions { n_max: 64, noise_a: None, noise_b: None }
    }
}

fn long_sequence(s: &Loaded, opts: &LongSequenceOptions) -> CliResult<Report> {
    let (fa, fb) = match (opts.noise_a, opts.noise_b) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            let factors = s
                .noise()?
                .factors()
                .filter(|f| f.len() == 2)
                .ok_or_else(|| CliError::at("$.noise", "long-sequence needs a two-step product noise model or noise_a/noise_b options"))?;
            (a.unwrap_or(factors[0]), b.unwrap_or(factors[1]))
        }
    };
    let model = NoiseModel::from_factors(&[fa, fb])?;
    Report::record(&long_sequence_failure(opts.n_max, &model)?)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsOptions {
    pub max_degree: u32,
}

impl Default for MomentsOptions {
    fn default() -> Self {
        MomentsOptions { max_degree: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsReport {
    pub steps: Vec<String>,
    pub moments: MomentTable,
    pub cumulants: CumulantTable,
}

fn moments(s: &Loaded, opts: &MomentsOptions, limits: Limits) -> CliResult<Report> {
    let m = moments_of_quasi(&distribution(s, limits)?, opts.max_degree)?;
    let c = moments_to_cumulants(&m)?;
    let mut table = Table::new(&["exponents", "moment", "cumulant"]);
    for ((alpha, mv), (_, cv)) in m.iter().zip(c.iter()) {
        table.push(vec![alpha.to_string().into(), mv.into(), cv.into()]);
    }
    Report::new(&MomentsReport { steps: s.step_labels(), moments: m, cumulants: c }, table)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateOptions {
    pub degree: u32,
    pub bracket_width: f64,
    pub direction: Option<Vec<f64>>,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions { degree: 3, bracket_width: 1e-6, direction: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateReport {
    pub degree: u32,
    pub result: CalibrationResult,
}

fn calibrate(s: &Loaded, opts: &CalibrateOptions, limits: Limits) -> CliResult<Report> {
    if opts.degree == 0 {
        return Err(CliError::at(format!("{}.degree", s.task_path("calibrate")), "degree must be at least 1"));
    }
    let m = moments_of_quasi(&distribution(s, limits)?, 2 * opts.degree)?;
    let co = CalibrationOptions {
        direction: opts.direction.clone(),
        max_scan_points: limits.scan,
        exec: Exec::Parallel,
        ..Default::default()
    };
    let result = calibrate_gaussian_noise(&m, opts.degree, opts.bracket_width, &co)?;
    Report::record(&CalibrateReport { degree: opts.degree, result })
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsOptions {
    /// Defaults to the two-variable probe `(1−a²)(1−b)/2`.
    pub u: Option<Polynomial>,
    /// Defaults to the constant 1.
    pub v: Option<Polynomial>,
    /// Isotropic Gaussian variance added before the second check.
    pub variance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsReport {
    pub u: Polynomial,
    pub v: Polynomial,
    pub raw: CauchySchwarz,
    pub variance: Option<f64>,
    pub with_noise: Option<CauchySchwarz>,
}

fn cs_check(s: &Loaded, opts: &CsOptions, limits: Limits) -> CliResult<Report> {
    let q = distribution(s, limits)?;
    let n = q.n();
    let u = match &opts.u {
        Some(u) => u.clone(),
        None if n == 2 => table1_probe(),
        None => return Err(CliError::at(format!("{}.u", s.task_path("cs-check")), "the default probe needs a two-step schedule")),
    };
    let v = opts.v.clone().unwrap_or_else(|| Polynomial::constant(n, 1.0));
    for (name, p) in [("u", &u), ("v", &v)] {
        if p.variables != n {
            return Err(CliError::at(
                format!("{}.{name}", s.task_path("cs-check")),
                format!("polynomial has {} variables, schedule has {n} steps", p.variables),
            ));
        }
    }
    let degree = 2 * u.degree().max(v.degree());
    let m = moments_of_quasi(&q, degree)?;
    let raw = cauchy_schwarz_check(&m, &u, &v)?;
    let with_noise = match opts.variance {
        Some(var) if !(var.is_finite() && var >= 0.0) => {
            return Err(CliError::at(format!("{}.variance", s.task_path("cs-check")), "variance must be nonnegative"))
        }
        Some(var) => Some(cauchy_schwarz_check(&add_gaussian_noise(&m, &vec![var; n])?, &u, &v)?),
        None => None,
    };
    Report::record(&CsReport { u, v, raw, variance: opts.variance, with_noise })
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakOptions {
    /// Steps whose outcomes are multiplied; all steps when absent.
    pub selection: Option<Vec<usize>>,
    pub eta_list: Option<Vec<f64>>,
}

fn weak(s: &Loaded, opts: &WeakOptions) -> CliResult<Report> {
    let schedule = s.schedule()?;
    let selection = opts.selection.clone().unwrap_or_else(|| (0..schedule.len()).collect());
    let etas = opts.eta_list.clone().unwrap_or_else(|| DEFAULT_ETAS.to_vec());
    let report = weak_limit(s.state()?, schedule, &selection, &etas, Exec::Parallel)?;
    Report::record(&report)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseFloorOptions {
    pub particle_count: f64,
    pub box_side: f64,
    pub duration_seconds: f64,
    pub micro_length: f64,
    pub micro_time: f64,
}

impl Default for NoiseFloorOptions {
    fn default() -> Self {
        NoiseFloorOptions {
            particle_count: 1e20,
            box_side: 1e-3,
            duration_seconds: 0.1,
            micro_length: 1e-10,
            micro_time: 1e-7,
        }
    }
}

fn noise_floor(o: &NoiseFloorOptions) -> CliResult<Report> {
    let est = noise_floor_estimate(o.particle_count, o.box_side, o.duration_seconds, o.micro_length, o.micro_time)?;
    Report::record(&est)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Entry {
    pub a: f64,
    pub b: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Report {
    pub entries: Vec<Table1Entry>,
}

/// `Â` then `B̂` on `|+⟩`: `a` over the branch points of the first step, `b`
/// over the spectrum of `B̂`, zero weights included.
fn table1_demo() -> CliResult<Report> {
    let q = quasi_distribution(&models::plus_state(), &models::table1_schedule(), QuasiOptions::default())?;
    let mut spectrum = jacobi_eigen(models::observable_b().matrix()).0;
    spectrum.sort_by(f64::total_cmp);
    spectrum.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let mut entries = Vec::new();
    for &a in &q.supports()[0] {
        for &b in &spectrum {
            entries.push(Table1Entry { a, b, weight: q.weight(&[a, b]) });
        }
    }
    let mut table = Table::new(&["a", "b", "weight"]);
    for e in &entries {
        table.push(vec![e.a.into(), e.b.into(), e.weight.into()]);
    }
    Report::new(&Table1Report { entries }, table)
}
