//! Python bindings for the `elaa-isac` core crate.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use elaa_isac::baselines::{self, BaselineResult};
use elaa_isac::harness::{self, Experiment, ExperimentSpec, Profile};
use elaa_isac::metrics::{self, QosTargets};
use elaa_isac::rng::{stream, Stream};
use elaa_isac::solver;
use elaa_isac::Error;

create_exception!(elaa_isac, InfeasibleError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible(_) => InfeasibleError::new_err(e.to_string()),
        Error::Config(_) | Error::Domain(_) | Error::Geometry(_) | Error::Estimation(_) | Error::TooLarge(..) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "SystemConfig", from_py_object)]
#[derive(Clone)]
struct PySystemConfig {
    inner: elaa_isac::SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    /// Desk-scale defaults, optionally with placements drawn from `seed`.
    #[new]
    #[pyo3(signature = (seed=None))]
    fn new(seed: Option<u64>) -> Self {
        let base = elaa_isac::SystemConfig::default();
        Self { inner: seed.map_or(base.clone(), |s| base.with_random_placement(s)) }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        elaa_isac::SystemConfig::from_json_str(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn with_random_placement(&self, seed: u64) -> Self {
        Self { inner: self.inner.with_random_placement(seed) }
    }

    fn with_subarrays(&self, s: usize) -> PyResult<Self> {
        self.inner.with_subarrays(s).map(|inner| Self { inner }).map_err(to_py)
    }

    fn with_users(&self, k_n: usize, k_f: usize) -> Self {
        Self { inner: self.inner.with_users(k_n, k_f) }
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    #[getter]
    fn m_t(&self) -> usize {
        self.inner.m_t()
    }

    #[getter]
    fn s(&self) -> usize {
        self.inner.s
    }

    #[getter]
    fn k_n(&self) -> usize {
        self.inner.k_n
    }

    #[getter]
    fn k_f(&self) -> usize {
        self.inner.k_f
    }

    #[getter]
    fn qos_fraction(&self) -> f64 {
        self.inner.qos_fraction
    }

    #[setter]
    fn set_qos_fraction(&mut self, v: f64) {
        self.inner.qos_fraction = v;
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!("SystemConfig(M_t={}, S={}, K_N={}, K_F={}, seed={})", c.m_t(), c.s, c.k_n, c.k_f, c.rng_seed)
    }
}

#[pyclass(name = "ActivationState", from_py_object)]
#[derive(Clone)]
struct PyActivationState {
    inner: metrics::ActivationState,
}

#[pymethods]
impl PyActivationState {
    #[new]
    fn new(a_bar: Vec<f64>, a_tilde: Vec<f64>, a: Vec<f64>) -> PyResult<Self> {
        if a_bar.len() != a_tilde.len() || a_bar.len() != a.len() {
            return Err(PyValueError::new_err("activation vectors must share one length"));
        }
        Ok(Self { inner: metrics::ActivationState { a_bar, a_tilde, a } })
    }

    #[staticmethod]
    fn all_on(s: usize) -> Self {
        Self { inner: metrics::ActivationState::all_on(s) }
    }

    #[staticmethod]
    fn all_off(s: usize) -> Self {
        Self { inner: metrics::ActivationState::all_off(s) }
    }

    #[staticmethod]
    fn from_binary(a_bar: Vec<bool>, a_tilde: Vec<bool>) -> PyResult<Self> {
        if a_bar.len() != a_tilde.len() {
            return Err(PyValueError::new_err("activation vectors must share one length"));
        }
        Ok(Self { inner: metrics::ActivationState::from_binary(&a_bar, &a_tilde) })
    }

    #[getter]
    fn a_bar(&self) -> Vec<f64> {
        self.inner.a_bar.clone()
    }

    #[getter]
    fn a_tilde(&self) -> Vec<f64> {
        self.inner.a_tilde.clone()
    }

    #[getter]
    fn a(&self) -> Vec<f64> {
        self.inner.a.clone()
    }

    fn is_binary(&self) -> bool {
        self.inner.is_binary()
    }

    fn binarity_gap(&self) -> f64 {
        self.inner.binarity_gap()
    }

    fn active_count(&self) -> usize {
        self.inner.active_count()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("ActivationState(a_bar={:?}, a_tilde={:?}, a={:?})", self.inner.a_bar, self.inner.a_tilde, self.inner.a)
    }
}

#[pyclass(name = "QosTargets", from_py_object)]
#[derive(Clone)]
struct PyQosTargets {
    inner: QosTargets,
}

#[pymethods]
impl PyQosTargets {
    #[new]
    fn new(r_bar: Vec<f64>, r_tilde: Vec<f64>, kappa: f64) -> Self {
        Self { inner: QosTargets { r_bar, r_tilde, kappa } }
    }

    #[getter]
    fn r_bar(&self) -> Vec<f64> {
        self.inner.r_bar.clone()
    }

    #[getter]
    fn r_tilde(&self) -> Vec<f64> {
        self.inner.r_tilde.clone()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }
}

/// Built problem instance: channels, precoders and second moments.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    inner: elaa_isac::Scenario,
}

impl PyScenario {
    fn targets(&self, targets: Option<PyQosTargets>) -> PyResult<QosTargets> {
        let t = targets.map_or_else(|| metrics::derive_qos_targets(&self.inner), |t| t.inner);
        if t.r_bar.len() != self.inner.k_n() || t.r_tilde.len() != self.inner.k_f() {
            return Err(PyValueError::new_err("target lengths do not match the user counts"));
        }
        Ok(t)
    }

    fn check(&self, state: &PyActivationState) -> PyResult<()> {
        if state.inner.len() != self.inner.s() {
            return Err(PyValueError::new_err(format!("state has {} entries, S = {}", state.inner.len(), self.inner.s())));
        }
        Ok(())
    }
}

#[pymethods]
impl PyScenario {
    #[new]
    fn new(py: Python<'_>, config: PySystemConfig) -> PyResult<Self> {
        py.detach(|| elaa_isac::Scenario::build(&config.inner)).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn s(&self) -> usize {
        self.inner.s()
    }

    #[getter]
    fn k_n(&self) -> usize {
        self.inner.k_n()
    }

    #[getter]
    fn k_f(&self) -> usize {
        self.inner.k_f()
    }

    /// Floors at `qos_fraction` times the full-activation values.
    fn qos_targets(&self) -> PyQosTargets {
        PyQosTargets { inner: metrics::derive_qos_targets(&self.inner) }
    }

    fn total_power(&self, state: &PyActivationState) -> PyResult<f64> {
        self.check(state)?;
        Ok(metrics::total_power(&self.inner, &state.inner))
    }

    fn nfue_sinr(&self, k: usize, state: &PyActivationState) -> PyResult<f64> {
        self.check(state)?;
        if k >= self.inner.k_n() {
            return Err(PyValueError::new_err("NFUE index out of range"));
        }
        Ok(metrics::nfue_sinr(&self.inner, k, &state.inner))
    }

    fn ffue_sinr(&self, k: usize, state: &PyActivationState) -> PyResult<f64> {
        self.check(state)?;
        if k >= self.inner.k_f() {
            return Err(PyValueError::new_err("FFUE index out of range"));
        }
        Ok(metrics::ffue_sinr(&self.inner, k, &state.inner))
    }

    fn beampattern_gain(&self, state: &PyActivationState) -> PyResult<f64> {
        self.check(state)?;
        Ok(metrics::beampattern_gain(&self.inner, &state.inner))
    }

    /// Exact audit as a JSON string.
    #[pyo3(signature = (state, targets=None))]
    fn audit(&self, state: &PyActivationState, targets: Option<PyQosTargets>) -> PyResult<String> {
        self.check(state)?;
        let a = metrics::audit(&self.inner, &self.targets(targets)?, &state.inner);
        serde_json::to_string(&a).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[pyo3(signature = (state, targets=None))]
    fn is_feasible(&self, state: &PyActivationState, targets: Option<PyQosTargets>) -> PyResult<bool> {
        self.check(state)?;
        Ok(metrics::audit(&self.inner, &self.targets(targets)?, &state.inner).feasible)
    }
}

#[pyclass(name = "SolveResult", frozen)]
struct PySolveResult {
    inner: solver::SolveResult,
}

#[pymethods]
impl PySolveResult {
    #[getter]
    fn activation(&self) -> PyActivationState {
        PyActivationState { inner: self.inner.activation.clone() }
    }

    #[getter]
    fn relaxed_final(&self) -> PyActivationState {
        PyActivationState { inner: self.inner.relaxed_final.clone() }
    }

    #[getter]
    fn power_w(&self) -> f64 {
        self.inner.power_w
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn degraded(&self) -> bool {
        self.inner.degraded
    }

    #[getter]
    fn feasible(&self) -> bool {
        self.inner.feasible
    }

    /// `(iteration, P_C1, P_C, binarity_gap, penalty)` per iteration.
    #[getter]
    fn trace(&self) -> Vec<(usize, f64, f64, f64, f64)> {
        self.inner
            .objective_trace
            .iter()
            .map(|r| (r.iteration, r.penalized_objective, r.power_w, r.binarity_gap, r.penalty))
            .collect()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveResult(power_w={}, iterations={}, converged={}, feasible={})",
            self.inner.power_w, self.inner.iterations, self.inner.converged, self.inner.feasible
        )
    }
}

fn baseline_tuple(r: BaselineResult) -> (PyActivationState, f64, bool) {
    (PyActivationState { inner: r.activation }, r.power_w, r.feasible)
}

/// Penalized SCA followed by rounding and repair.
#[pyfunction]
#[pyo3(signature = (scenario, targets=None))]
fn run_sca(py: Python<'_>, scenario: &PyScenario, targets: Option<PyQosTargets>) -> PyResult<PySolveResult> {
    let t = scenario.targets(targets)?;
    let sc = &scenario.inner;
    py.detach(|| solver::run_sca(sc, &t)).map(|inner| PySolveResult { inner }).map_err(to_py)
}

/// Returns `(state, power_w, feasible)`.
#[pyfunction]
#[pyo3(signature = (scenario, targets=None))]
fn all_subarrays(scenario: &PyScenario, targets: Option<PyQosTargets>) -> PyResult<(PyActivationState, f64, bool)> {
    let t = scenario.targets(targets)?;
    Ok(baseline_tuple(baselines::all_subarrays(&scenario.inner, &t)))
}

/// Random subsets drawn from the baseline stream of `seed`.
#[pyfunction]
#[pyo3(signature = (scenario, seed, n_start, targets=None))]
fn random_activation(
    scenario: &PyScenario,
    seed: u64,
    n_start: usize,
    targets: Option<PyQosTargets>,
) -> PyResult<(PyActivationState, f64, bool)> {
    let t = scenario.targets(targets)?;
    let mut rng = stream(seed, Stream::RandomBaseline);
    Ok(baseline_tuple(baselines::random_activation(&scenario.inner, &t, &mut rng, n_start)))
}

/// Exhaustive search over all binary states.
#[pyfunction]
#[pyo3(signature = (scenario, targets=None))]
fn exhaustive_oracle(
    py: Python<'_>,
    scenario: &PyScenario,
    targets: Option<PyQosTargets>,
) -> PyResult<(PyActivationState, f64, bool)> {
    let t = scenario.targets(targets)?;
    let sc = &scenario.inner;
    py.detach(|| baselines::exhaustive_oracle(sc, &t)).map(baseline_tuple).map_err(to_py)
}

/// Runs an experiment and returns `{file name: CSV text}`.
#[pyfunction]
#[pyo3(signature = (experiment, seeds, profile="desk", config=None, with_oracle=false, workers=None))]
fn run_experiment(
    py: Python<'_>,
    experiment: &str,
    seeds: Vec<u64>,
    profile: &str,
    config: Option<PySystemConfig>,
    with_oracle: bool,
    workers: Option<usize>,
) -> PyResult<Vec<(String, String)>> {
    let experiment: Experiment = experiment.parse().map_err(to_py)?;
    let profile: Profile = profile.parse().map_err(to_py)?;
    let base = config.map_or_else(elaa_isac::SystemConfig::default, |c| c.inner);
    let spec = ExperimentSpec::new(experiment, profile, base, seeds, with_oracle).map_err(to_py)?;
    let tables = py.detach(|| harness::run_experiment(&spec, workers)).map_err(to_py)?;
    Ok(tables.into_iter().map(|t| (t.name, t.text)).collect())
}

#[pymodule(name = "elaa_isac")]
fn elaa_isac_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PyActivationState>()?;
    m.add_class::<PyQosTargets>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(run_sca, m)?)?;
    m.add_function(wrap_pyfunction!(all_subarrays, m)?)?;
    m.add_function(wrap_pyfunction!(random_activation, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    Ok(())
}
