//! Python bindings: load and run scenarios, drive a gateway by hand, and
//! encode or decode telemetry batches.
//!
//! Structured values (metrics, commands, node configs) cross the boundary as
//! plain dicts and lists through the `json` module.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use stormnet_core::datastore::AckOutcome;
use stormnet_core::gateway::ConfigRequest;
use stormnet_core::node::NodeConfig;
use stormnet_core::scenario::{run_scenario, RunOptions};
use stormnet_core::telemetry::{self, Credentials};
use stormnet_core::{Datastore, Point, SeriesKey};

create_exception!(stormnet, StormnetError, PyException);
// args are (status, message) with the HTTP status the server would send
create_exception!(stormnet, ApiError, StormnetError);

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| StormnetError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn api(e: stormnet_core::gateway::ApiError) -> PyErr {
    ApiError::new_err((e.status(), e.to_string()))
}

fn scenario_err(e: stormnet_core::scenario::ScenarioError) -> PyErr {
    StormnetError::new_err(e.to_string())
}

fn creds(auth: Option<(String, String)>) -> Option<Credentials> {
    auth.map(|(u, p)| Credentials::new(u, p))
}

fn series(name: &str) -> PyResult<SeriesKey> {
    name.parse().map_err(PyValueError::new_err)
}

#[pyclass(name = "Scenario", module = "stormnet")]
struct PyScenario {
    inner: stormnet_core::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Load a scenario file, or a built-in scenario by name.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        stormnet_core::Scenario::load(&path).map(|inner| Self { inner }).map_err(scenario_err)
    }

    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        stormnet_core::Scenario::builtin(name).map(|inner| Self { inner }).map_err(scenario_err)
    }

    #[staticmethod]
    fn builtin_names() -> Vec<&'static str> {
        stormnet_core::Scenario::builtin_names()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn description(&self) -> &str {
        &self.inner.description
    }

    #[getter]
    fn duration_hours(&self) -> f64 {
        self.inner.duration_hours
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn node_ids(&self) -> Vec<String> {
        self.inner.nodes.iter().map(|n| n.node_id.clone()).collect()
    }

    fn config_hash(&self) -> String {
        self.inner.config_hash()
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// Run to completion; releases the interpreter lock while simulating.
    #[pyo3(signature = (seed=None))]
    fn run(&self, py: Python<'_>, seed: Option<u64>) -> PyResult<PyReport> {
        let scenario = self.inner.clone();
        let report = py
            .detach(move || run_scenario(&scenario, RunOptions { seed, ..Default::default() }))
            .map_err(scenario_err)?;
        Ok(PyReport { inner: report })
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?}, {} h, {} nodes)", self.inner.name, self.inner.duration_hours, self.inner.nodes.len())
    }
}

#[pyclass(name = "Report", module = "stormnet")]
struct PyReport {
    inner: stormnet_core::scenario::Report,
}

#[pymethods]
impl PyReport {
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.metrics)
    }

    /// A metric by dotted path, e.g. `"comparison.peak_reduction"`.
    fn metric(&self, path: &str) -> Option<f64> {
        self.inner.metrics.lookup(path)
    }

    fn checks<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.checks)
    }

    #[getter]
    fn passed(&self) -> bool {
        self.inner.passed()
    }

    fn plant_columns(&self) -> Vec<String> {
        self.inner.controlled.trace.plant.names.clone()
    }

    /// `(times_ms, values)` of one plant trace column of the controlled run.
    fn plant_column(&self, name: &str) -> PyResult<(Vec<i64>, Vec<f64>)> {
        let t = &self.inner.controlled.trace.plant;
        let col = t.column(name).ok_or_else(|| PyValueError::new_err(format!("no plant column {name:?}")))?;
        Ok((t.times.clone(), col.to_vec()))
    }

    /// Stored points of one `node.sensor` series from the controlled run.
    fn series(&self, name: &str) -> PyResult<Vec<(i64, f64)>> {
        let points = self.inner.controlled.store.query_range(&series(name)?, i64::MIN, i64::MAX).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(points.iter().map(|p| (p.timestamp, p.value)).collect())
    }

    fn bundle_files(&self) -> Vec<String> {
        self.inner.bundle.files.keys().cloned().collect()
    }

    fn write_bundle(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.bundle.write_to(&dir).map_err(scenario_err)
    }
}

/// A gateway over an empty in-memory store. `auth` arguments are
/// `(username, password)` tuples or `None`.
#[pyclass(name = "Gateway", module = "stormnet")]
struct PyGateway {
    inner: stormnet_core::Gateway,
}

#[pymethods]
impl PyGateway {
    #[new]
    fn new() -> Self {
        Self { inner: stormnet_core::Gateway::new(Datastore::new()) }
    }

    fn add_user(&self, username: &str, password: &str) {
        self.inner.add_user(&Credentials::new(username, password));
    }

    /// Register a node from a dict in the scenario file's node layout.
    fn register_node(&self, config: &Bound<'_, PyAny>) -> PyResult<()> {
        let config: NodeConfig = from_py(config)?;
        self.inner.register_node(&config);
        Ok(())
    }

    #[pyo3(signature = (auth, body))]
    fn write(&self, auth: Option<(String, String)>, body: &str) -> PyResult<usize> {
        self.inner.write(creds(auth).as_ref(), body).map_err(api)
    }

    #[pyo3(signature = (auth, series_name, start=i64::MIN, end=i64::MAX))]
    fn query(&self, auth: Option<(String, String)>, series_name: &str, start: i64, end: i64) -> PyResult<Vec<(i64, f64)>> {
        let points = self.inner.query(creds(auth).as_ref(), &series(series_name)?, start, end).map_err(api)?;
        Ok(points.iter().map(|p| (p.timestamp, p.value)).collect())
    }

    fn set_valve(&self, auth: Option<(String, String)>, node: &str, opening: f64, now: i64) -> PyResult<u64> {
        self.inner.set_valve(creds(auth).as_ref(), node, opening, now).map_err(api)
    }

    /// `request` holds any of `sampling_interval_min`, `sensor`, `enabled`.
    fn set_config(&self, auth: Option<(String, String)>, node: &str, request: &Bound<'_, PyAny>, now: i64) -> PyResult<Vec<u64>> {
        let request: ConfigRequest = from_py(request)?;
        self.inner.set_config(creds(auth).as_ref(), node, &request, now).map_err(api)
    }

    /// Deliver pending commands, as a node wake would.
    fn fetch_commands<'py>(&self, py: Python<'py>, auth: Option<(String, String)>, node: &str, now: i64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.fetch_commands(creds(auth).as_ref(), node, now).map_err(api)?)
    }

    /// Every command of a node with its state; delivers nothing.
    fn list_commands<'py>(&self, py: Python<'py>, auth: Option<(String, String)>, node: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.list_commands(creds(auth).as_ref(), node).map_err(api)?)
    }

    /// `outcome` is e.g. `{"outcome": "applied"}` or
    /// `{"outcome": "rejected", "reason": "..."}`.
    fn ack<'py>(
        &self,
        py: Python<'py>,
        auth: Option<(String, String)>,
        node: &str,
        command_id: u64,
        outcome: &Bound<'py, PyAny>,
        now: i64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let outcome: AckOutcome = from_py(outcome)?;
        let r = self.inner.ack(creds(auth).as_ref(), node, command_id, outcome, now).map_err(api)?;
        to_py(py, &serde_json::json!({ "command_id": command_id, "state": r.state, "transitioned": r.transitioned }))
    }

    fn nodes<'py>(&self, py: Python<'py>, auth: Option<(String, String)>, now: i64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.nodes(creds(auth).as_ref(), now).map_err(api)?)
    }

    #[pyo3(signature = (auth, since=i64::MIN))]
    fn alerts<'py>(&self, py: Python<'py>, auth: Option<(String, String)>, since: i64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.alerts_since(creds(auth).as_ref(), since).map_err(api)?)
    }

    fn point_count(&self) -> usize {
        self.inner.store().point_count()
    }
}

/// Encode `(node, sensor, timestamp_ms, value)` tuples as a write body.
#[pyfunction]
fn encode_points(points: Vec<(String, String, i64, f64)>) -> String {
    let points: Vec<Point> = points.iter().map(|(n, s, t, v)| Point::new(n, s, *t, *v)).collect();
    telemetry::encode_points(&points)
}

#[pyfunction]
fn decode_points(text: &str) -> PyResult<Vec<(String, String, i64, f64)>> {
    let points = telemetry::decode_points(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(points.into_iter().map(|p| (p.series.node, p.series.sensor, p.timestamp, p.value)).collect())
}

#[pymodule]
fn stormnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyGateway>()?;
    m.add_function(wrap_pyfunction!(encode_points, m)?)?;
    m.add_function(wrap_pyfunction!(decode_points, m)?)?;
    m.add("StormnetError", m.py().get_type::<StormnetError>())?;
    m.add("ApiError", m.py().get_type::<ApiError>())?;
    Ok(())
}
