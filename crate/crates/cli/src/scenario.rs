//! Scenario files: one JSON document drives every task.

use std::collections::BTreeMap;
use std::path::Path;

use qreal::linalg::{c, DensityState, HermitianObservable, MatrixRepr, MAX_DIM};
use qreal::noise::{NoiseFactor, NoiseGroup, NoiseModel};
use qreal::quasiprob::{Schedule, Step};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub dimension: usize,
    #[serde(default)]
    pub observables: BTreeMap<String, MatrixRepr>,
    #[serde(default)]
    pub hamiltonian: Option<MatrixRepr>,
    #[serde(default)]
    pub initial_state: Option<InitialState>,
    #[serde(default)]
    pub schedule: Vec<StepSpec>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Density(MatrixRepr),
    /// Amplitudes as `[re, im]` pairs; normalized on load.
    Pure(Vec<[f64; 2]>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub observable: String,
    #[serde(default)]
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Parameters are variances.
    Gaussian,
    /// Parameters are exponents `α` of `e^{−αu²}`.
    GaussianExponent,
    /// Parameters are rates `α` of `e^{−α|u|}`.
    Laplace,
}

/// Without `groups`: one parameter per step. With `groups`: one parameter per
/// group, and all steps of a group share one noise value.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub params: Vec<f64>,
    #[serde(default)]
    pub groups: Option<Vec<Vec<usize>>>,
}

impl NoiseSpec {
    pub fn factor(&self, p: f64) -> NoiseFactor {
        match self.kind {
            NoiseKind::Gaussian => NoiseFactor::Gaussian { variance: p },
            NoiseKind::GaussianExponent => NoiseFactor::gaussian_exponent(p),
            NoiseKind::Laplace => NoiseFactor::Laplace { rate: p },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct TaskSpec {
    pub task: String,
    #[serde(flatten)]
    pub options: serde_json::Map<String, Value>,
}

/// Parse JSON text, reporting the path of the first structural error.
pub fn parse_json<T: DeserializeOwned>(text: &str, root: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = join_path(root, &e.path().to_string());
        CliError::at(path, e.inner().to_string())
    })
}

/// Deserialize a JSON value, reporting the failing path below `root`.
pub fn from_value<T: DeserializeOwned>(value: Value, root: &str) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = join_path(root, &e.path().to_string());
        CliError::at(path, e.inner().to_string())
    })
}

fn join_path(root: &str, inner: &str) -> String {
    if inner.is_empty() || inner == "." {
        root.to_string()
    } else if inner.starts_with('[') {
        format!("{root}{inner}")
    } else {
        format!("{root}.{inner}")
    }
}

/// Validated scenario with core types.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub raw: Scenario,
    pub names: Vec<String>,
    pub schedule: Option<Schedule>,
    pub state: Option<DensityState>,
    pub noise: Option<NoiseModel>,
}

pub fn load(path: &Path) -> CliResult<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let raw: Scenario = parse_json(&text, "$")?;
    validate(raw)
}

pub fn validate(raw: Scenario) -> CliResult<Loaded> {
    let d = raw.dimension;
    if d == 0 || d > MAX_DIM {
        return Err(CliError::at("$.dimension", format!("dimension must be in 1..={MAX_DIM}, got {d}")));
    }
    let matrix = |repr: &MatrixRepr, path: &str| -> CliResult<HermitianObservable> {
        let m = repr.to_matrix().map_err(|e| CliError::from(e).with_path(path))?;
        if m.nrows() != d {
            return Err(CliError::at(path, format!("expected a {d}x{d} matrix, got {0}x{0}", m.nrows())));
        }
        HermitianObservable::new(m).map_err(|e| CliError::from(e).with_path(path))
    };

    let names: Vec<String> = raw.observables.keys().cloned().collect();
    let registry = raw
        .observables
        .iter()
        .map(|(name, repr)| matrix(repr, &format!("$.observables.{name}")))
        .collect::<CliResult<Vec<_>>>()?;
    let hamiltonian = raw.hamiltonian.as_ref().map(|h| matrix(h, "$.hamiltonian")).transpose()?;

    let mut steps = Vec::with_capacity(raw.schedule.len());
    for (k, s) in raw.schedule.iter().enumerate() {
        let observable = names
            .iter()
            .position(|n| *n == s.observable)
            .ok_or_else(|| CliError::at(format!("$.schedule[{k}].observable"), format!("unknown observable '{}'", s.observable)))?;
        if !s.time.is_finite() {
            return Err(CliError::at(format!("$.schedule[{k}].time"), "time must be finite"));
        }
        if k > 0 && s.time < raw.schedule[k - 1].time {
            return Err(CliError::at(format!("$.schedule[{k}].time"), "times must be nondecreasing"));
        }
        steps.push(Step { observable, time: s.time });
    }
    let schedule = if registry.is_empty() {
        if !steps.is_empty() {
            return Err(CliError::at("$.observables", "schedule refers to observables but none are defined"));
        }
        None
    } else {
        Some(Schedule::new(registry, steps, hamiltonian).map_err(|e| CliError::from(e).with_path("$.schedule"))?)
    };

    let state = match &raw.initial_state {
        None => None,
        Some(InitialState::Density(repr)) => {
            let m = repr.to_matrix().map_err(|e| CliError::from(e).with_path("$.initial_state.density"))?;
            if m.nrows() != d {
                return Err(CliError::at("$.initial_state.density", format!("expected a {d}x{d} matrix")));
            }
            Some(DensityState::new(m).map_err(|e| CliError::from(e).with_path("$.initial_state.density"))?)
        }
        Some(InitialState::Pure(v)) => {
            if v.len() != d {
                return Err(CliError::at("$.initial_state.pure", format!("expected {d} amplitudes, got {}", v.len())));
            }
            let psi: Vec<_> = v.iter().map(|z| c(z[0], z[1])).collect();
            Some(DensityState::from_pure(&psi).map_err(|e| CliError::from(e).with_path("$.initial_state.pure"))?)
        }
    };

    let n_steps = raw.schedule.len();
    let noise = raw.noise.as_ref().map(|spec| noise_model(spec, n_steps)).transpose()?;
    Ok(Loaded { raw, names, schedule, state, noise })
}

fn noise_model(spec: &NoiseSpec, n_steps: usize) -> CliResult<NoiseModel> {
    for (i, p) in spec.params.iter().enumerate() {
        if !(p.is_finite() && *p > 0.0) {
            return Err(CliError::at(format!("$.noise.params[{i}]"), format!("must be positive, got {p}")));
        }
    }
    let model = match &spec.groups {
        None => {
            if spec.params.len() != n_steps {
                return Err(CliError::at(
                    "$.noise.params",
                    format!("expected one parameter per schedule step ({n_steps}), got {}", spec.params.len()),
                ));
            }
            let factors: Vec<NoiseFactor> = spec.params.iter().map(|&p| spec.factor(p)).collect();
            NoiseModel::from_factors(&factors)?
        }
        Some(groups) => {
            if groups.len() != spec.params.len() {
                return Err(CliError::at("$.noise.params", "expected one parameter per group"));
            }
            let groups = groups
                .iter()
                .zip(&spec.params)
                .map(|(members, &p)| NoiseGroup { members: members.clone(), factor: spec.factor(p) })
                .collect();
            let model = NoiseModel::DeltaCorrelatedGroups { groups };
            if model.n_vars() != n_steps {
                return Err(CliError::at("$.noise.groups", format!("groups must partition the {n_steps} steps")));
            }
            model
        }
    };
    model.validate().map_err(|e| CliError::from(e).with_path("$.noise"))?;
    Ok(model)
}

impl Loaded {
    pub fn schedule(&self) -> CliResult<&Schedule> {
        self.schedule.as_ref().ok_or_else(|| CliError::at("$.schedule", "this task needs observables and a schedule"))
    }

    pub fn state(&self) -> CliResult<&DensityState> {
        self.state.as_ref().ok_or_else(|| CliError::at("$.initial_state", "this task needs an initial state"))
    }

    pub fn noise(&self) -> CliResult<&NoiseModel> {
        self.noise.as_ref().ok_or_else(|| CliError::at("$.noise", "this task needs a noise model"))
    }

    /// Options of the first descriptor for `task`, or defaults.
    pub fn options<T: DeserializeOwned + Default>(&self, task: &str) -> CliResult<T> {
        match self.raw.tasks.iter().position(|t| t.task == task) {
            Some(i) => from_value(Value::Object(self.raw.tasks[i].options.clone()), &format!("$.tasks[{i}]")),
            None => Ok(T::default()),
        }
    }

    /// JSON path of the first descriptor for `task`.
    pub fn task_path(&self, task: &str) -> String {
        match self.raw.tasks.iter().position(|t| t.task == task) {
            Some(i) => format!("$.tasks[{i}]"),
            None => "$.tasks".to_string(),
        }
    }

    /// Step labels `name@index`.
    pub fn step_labels(&self) -> Vec<String> {
        self.raw.schedule.iter().enumerate().map(|(k, s)| format!("{}@{k}", s.observable)).collect()
    }
}
