//! Python bindings. Structured values cross the boundary as plain Python
//! objects decoded from the engine's JSON wire format.

use std::path::PathBuf;

use insitu_core::config::EngineConfig;
use insitu_core::delivery::{apply_sim, revert_sim, DeliveryPlan, ReversalRecord};
use insitu_core::dom_model::{extract_interactables, parse_snapshot, snapshot_equal, DomSnapshot};
use insitu_core::engine::{AssistRequest, Engine, EngineError, FeedbackRequest};
use insitu_core::providers::{Embedder, MockEmbedder};
use insitu_core::recommender::{Method, RecommenderConfig};
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde_json::Value;

pyo3::create_exception!(insitu, InsituError, PyException);

fn engine_err(e: EngineError) -> PyErr {
    InsituError::new_err(format!("{}: {e}", e.kind()))
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

/// Accepts a JSON string or any object `json.dumps` can encode.
fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.downcast::<PyString>() {
        return Ok(s.to_str()?.to_string());
    }
    obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()
}

#[pyclass(name = "Snapshot", module = "insitu", frozen)]
#[derive(Clone)]
pub struct PySnapshot {
    inner: DomSnapshot,
}

#[pymethods]
impl PySnapshot {
    #[staticmethod]
    fn from_json(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner = parse_snapshot(&from_py(obj)?).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn url(&self) -> &str {
        &self.inner.url
    }

    #[getter]
    fn title(&self) -> &str {
        &self.inner.title
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn to_json(&self) -> String {
        self.inner.to_canonical_json()
    }

    /// Interactable elements in document order.
    fn elements<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rows: Vec<Value> = extract_interactables(&self.inner)
            .iter()
            .map(|e| {
                serde_json::json!({
                    "index": e.index,
                    "node_id": e.node_id,
                    "role": e.role.as_str(),
                    "label": e.label,
                    "section": e.section,
                    "target": e.target_form(),
                })
            })
            .collect();
        to_py(py, Value::Array(rows))
    }

    #[pyo3(signature = (other, ignore_assist_tags = false))]
    fn equals(&self, other: &PySnapshot, ignore_assist_tags: bool) -> bool {
        snapshot_equal(&self.inner, &other.inner, ignore_assist_tags)
    }

    fn __eq__(&self, other: &PySnapshot) -> bool {
        self.equals(other, false)
    }

    fn __repr__(&self) -> String {
        format!("Snapshot(url={:?}, nodes={})", self.inner.url, self.inner.len())
    }
}

/// Applies a delivery plan to a copy of the snapshot. Returns the new
/// snapshot and the reversal record (as a JSON string) needed to undo it.
#[pyfunction]
fn apply_plan(snapshot: &PySnapshot, plan: &Bound<'_, PyAny>) -> PyResult<(PySnapshot, String)> {
    let plan: DeliveryPlan = serde_json::from_str(&from_py(plan)?).map_err(value_err)?;
    let (inner, record) = apply_sim(&snapshot.inner, &plan).map_err(value_err)?;
    let record = serde_json::to_string(&record).map_err(value_err)?;
    Ok((PySnapshot { inner }, record))
}

#[pyfunction]
fn revert_plan(snapshot: &PySnapshot, record: &Bound<'_, PyAny>) -> PyResult<PySnapshot> {
    let record: ReversalRecord = serde_json::from_str(&from_py(record)?).map_err(value_err)?;
    Ok(PySnapshot {
        inner: revert_sim(&snapshot.inner, &record).snapshot,
    })
}

#[pyfunction]
fn interface_id(url: &str) -> PyResult<String> {
    insitu_core::knowledge::interface_id(url).map_err(value_err)
}

/// The deterministic offline embedding used by the mock provider.
#[pyfunction]
fn mock_embed(text: &str) -> PyResult<Vec<f64>> {
    Ok(MockEmbedder::new().embed(text).map_err(value_err)?.values().to_vec())
}

#[pyclass(name = "Engine", module = "insitu", frozen)]
pub struct PyEngine {
    inner: Engine,
}

#[pymethods]
impl PyEngine {
    /// `config` is a TOML or JSON file; `$INSITU_CONFIG` is used when absent.
    #[new]
    #[pyo3(signature = (config = None, data_dir = None, mock_fixtures = None, persist = None))]
    fn new(config: Option<PathBuf>, data_dir: Option<PathBuf>, mock_fixtures: Option<PathBuf>, persist: Option<bool>) -> PyResult<Self> {
        let mut cfg = EngineConfig::load(config.as_deref()).map_err(value_err)?;
        if let Some(d) = data_dir {
            cfg.data_dir = d;
        }
        if let Some(f) = mock_fixtures {
            cfg.providers.mock.fixtures_dir = Some(f);
        }
        if let Some(p) = persist {
            cfg.persist = p;
        }
        let inner = Engine::new(cfg).map_err(engine_err)?;
        Ok(Self { inner })
    }

    /// Builds knowledge and handbook on this thread and returns the status.
    fn init_interface<'py>(&self, py: Python<'py>, snapshot: &PySnapshot) -> PyResult<Bound<'py, PyAny>> {
        let snap = snapshot.inner.clone();
        let status = py.allow_threads(|| self.inner.init_interface_blocking(&snap)).map_err(engine_err)?;
        to_py(py, serde_json::to_value(status).map_err(value_err)?)
    }

    fn status<'py>(&self, py: Python<'py>, interface_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let status = self.inner.status(interface_id).map_err(engine_err)?;
        to_py(py, serde_json::to_value(status).map_err(value_err)?)
    }

    #[pyo3(signature = (interface_id, challenge, snapshot, session_id = None, selected_elements = None, method = None))]
    #[allow(clippy::too_many_arguments)]
    fn assist<'py>(
        &self,
        py: Python<'py>,
        interface_id: String,
        challenge: String,
        snapshot: &PySnapshot,
        session_id: Option<String>,
        selected_elements: Option<Vec<usize>>,
        method: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mut rcfg: RecommenderConfig = self.inner.config().recommender;
        if let Some(m) = method {
            rcfg.method = m.parse::<Method>().map_err(PyValueError::new_err)?;
        }
        let request = AssistRequest {
            interface_id,
            session_id,
            challenge,
            snapshot: snapshot.inner.clone(),
            selected_elements: selected_elements.unwrap_or_default(),
        };
        let resp = py.allow_threads(|| self.inner.assist_with(&request, rcfg)).map_err(engine_err)?;
        to_py(py, serde_json::to_value(resp).map_err(value_err)?)
    }

    fn feedback<'py>(&self, py: Python<'py>, case_id: String, rating: i64) -> PyResult<Bound<'py, PyAny>> {
        let req = FeedbackRequest { case_id, rating, session_id: None };
        let resp = py.allow_threads(|| self.inner.feedback(&req)).map_err(engine_err)?;
        to_py(py, serde_json::to_value(resp).map_err(value_err)?)
    }

    fn export_handbook(&self, interface_id: &str) -> PyResult<String> {
        self.inner.export_handbook(interface_id).map_err(engine_err)
    }

    /// Provider calls made so far.
    fn calls<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, serde_json::to_value(self.inner.calls()).map_err(value_err)?)
    }
}

pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("InsituError", m.py().get_type::<InsituError>())?;
    m.add_class::<PySnapshot>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(apply_plan, m)?)?;
    m.add_function(wrap_pyfunction!(revert_plan, m)?)?;
    m.add_function(wrap_pyfunction!(interface_id, m)?)?;
    m.add_function(wrap_pyfunction!(mock_embed, m)?)?;
    Ok(())
}

#[pymodule]
#[pyo3(name = "insitu")]
fn insitu_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
