//! Python bindings: reward programs, the driving environment, training and
//! evaluation.

use std::path::PathBuf;

use curriflow::curriculum::{CurriculumId, Density};
use curriflow::flow::{self, FlowError, RunConfig};
use curriflow::llm::ProviderKind;
use curriflow::reward::{AccessibleVars, LintBounds, RewardProgram, VAR_SPECS};
use curriflow::sim::{Control, DrivingEnv, ScenarioConfig, Task};
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn flow_err(e: FlowError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_task(name: &str) -> PyResult<Task> {
    name.parse().map_err(value_err)
}

fn parse_density(name: &str) -> PyResult<Density> {
    name.parse().map_err(value_err)
}

fn json_to_py<'py>(py: Python<'py>, value: serde_json::Result<String>) -> PyResult<Bound<'py, PyAny>> {
    let text = value.map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A parsed reward program.
#[pyclass(name = "RewardProgram", frozen)]
struct PyRewardProgram {
    inner: RewardProgram,
}

#[pymethods]
impl PyRewardProgram {
    #[new]
    fn new(source: &str) -> PyResult<Self> {
        RewardProgram::parse(source).map(|inner| Self { inner }).map_err(value_err)
    }

    #[getter]
    fn components(&self) -> Vec<String> {
        self.inner.component_names()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint_hex()
    }

    /// Evaluate with variables given by name; missing names are 0.
    fn evaluate<'py>(&self, py: Python<'py>, vars: &Bound<'py, PyDict>) -> PyResult<(f64, Bound<'py, PyDict>)> {
        let mut arr = AccessibleVars::default().to_array();
        for (k, v) in vars.iter() {
            let name: String = k.extract()?;
            let i = VAR_SPECS
                .iter()
                .position(|s| s.name == name)
                .ok_or_else(|| PyKeyError::new_err(format!("unknown variable {name}")))?;
            arr[i] = v.extract()?;
        }
        let out = self.inner.evaluate_array(&arr).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let comps = PyDict::new(py);
        for (k, v) in &out.components {
            comps.set_item(k, v)?;
        }
        Ok((out.total, comps))
    }

    /// Lint warnings against the bounds of the given task.
    fn lint(&self, task: &str) -> PyResult<Vec<(String, String)>> {
        let bounds = LintBounds::from_scenario(&ScenarioConfig::for_task(parse_task(task)?));
        Ok(self.inner.lint(&bounds).iter().map(|w| (w.kind().to_string(), w.to_string())).collect())
    }
}

#[pyclass(name = "DrivingEnv")]
struct PyDrivingEnv {
    inner: DrivingEnv,
}

#[pymethods]
impl PyDrivingEnv {
    #[new]
    #[pyo3(signature = (task, density, mode, seed))]
    fn new(task: &str, density: &str, mode: i64, seed: u64) -> PyResult<Self> {
        let id = CurriculumId::from_indices(parse_density(density)? as i64, mode).map_err(value_err)?;
        let inner = DrivingEnv::reset(&ScenarioConfig::for_task(parse_task(task)?), id, seed).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn observe(&self) -> Vec<f64> {
        self.inner.observe().flatten().to_vec()
    }

    /// Advance one simulation step. Returns (observation, outcome).
    fn step(&mut self, accel: f64, steer: f64) -> PyResult<(Vec<f64>, String)> {
        let r = self.inner.step(Control::new(accel, steer)).map_err(value_err)?;
        Ok((self.observe(), r.outcome.kind.as_str().to_string()))
    }

    #[getter]
    fn step_index(&self) -> u32 {
        self.inner.step_index()
    }

    #[getter]
    fn ego_lane(&self) -> usize {
        self.inner.ego_lane()
    }
}

/// Train with the mock provider, or with only the baseline reward when
/// `mock_dir` is None. Returns the final evaluation report (or None).
#[pyfunction]
#[pyo3(signature = (task, episodes, out, seed=0, mock_dir=None, target_density="low", eval_episodes=100))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    task: &str,
    episodes: u64,
    out: PathBuf,
    seed: u64,
    mock_dir: Option<PathBuf>,
    target_density: &str,
    eval_episodes: u32,
) -> PyResult<Option<Bound<'py, PyAny>>> {
    let mut cfg = RunConfig::new(parse_task(task)?, episodes, seed, &out);
    cfg.provider.kind = ProviderKind::Mock;
    cfg.target_density = parse_density(target_density)?;
    cfg.eval_episodes = eval_episodes;
    match mock_dir {
        Some(dir) => cfg.provider.mock_dir = Some(dir),
        None => {
            cfg.fixed_reward = true;
            cfg.no_curriculum = true;
        }
    }
    let summary = py.detach(|| flow::train(cfg)).map_err(flow_err)?;
    summary.eval.map(|r| json_to_py(py, serde_json::to_string(&r))).transpose()
}

/// Greedy evaluation of a checkpoint.
#[pyfunction]
#[pyo3(signature = (checkpoint, task, densities=None, episodes=100))]
fn evaluate<'py>(
    py: Python<'py>,
    checkpoint: PathBuf,
    task: &str,
    densities: Option<Vec<String>>,
    episodes: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let densities = match densities {
        Some(d) => d.iter().map(|s| parse_density(s)).collect::<PyResult<Vec<_>>>()?,
        None => vec![Density::Empty, Density::Low, Density::Medium, Density::High],
    };
    let task = parse_task(task)?;
    let report = py.detach(|| flow::evaluate(&checkpoint, task, &densities, episodes, 5)).map_err(flow_err)?;
    json_to_py(py, serde_json::to_string(&report))
}

#[pymodule]
fn curriflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRewardProgram>()?;
    m.add_class::<PyDrivingEnv>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add("VARIABLES", VAR_SPECS.iter().map(|s| s.name).collect::<Vec<_>>())?;
    Ok(())
}
