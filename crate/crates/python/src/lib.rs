use dlacb_core::harness::{run_all_scenarios, setup_world};
use dlacb_core::model::{DecisionModel, Operation};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn runtime<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A seeded deployment: validators, users, resources and a trained model.
#[pyclass(unsendable)]
struct World {
    inner: dlacb_core::harness::World,
}

#[pymethods]
impl World {
    #[new]
    #[pyo3(signature = (validators=3, users=100, resources=50, seed=42))]
    fn new(validators: usize, users: usize, resources: usize, seed: u64) -> PyResult<Self> {
        let inner = setup_world(validators, users, resources, seed).map_err(runtime)?;
        Ok(World { inner })
    }

    /// Returns the verdict as a string, e.g. "Allowed" or "Denied(ModelDenied)".
    fn request(&mut self, user: usize, resource: u32, operation: &str) -> PyResult<String> {
        let op: Operation = operation.parse().map_err(PyValueError::new_err)?;
        let out = self.inner.run_request(user, resource, op).map_err(runtime)?;
        Ok(out.verdict.to_string())
    }

    /// (id, expected, observed, pass) per scenario.
    fn scenarios(&mut self) -> PyResult<Vec<(u32, String, String, bool)>> {
        let reports = run_all_scenarios(&mut self.inner).map_err(runtime)?;
        Ok(reports
            .into_iter()
            .map(|r| (r.id, r.expected.to_string(), r.observed.to_string(), r.pass))
            .collect())
    }

    fn verify_log(&self) -> bool {
        self.inner.verify_own_log().is_verified()
    }

    fn height(&self) -> u64 {
        self.inner.chain().height()
    }

    fn chain_text(&self) -> String {
        self.inner.chain_text()
    }
}

#[pyfunction]
fn sha256_hex(data: &[u8]) -> String {
    dlacb_core::crypto::hash(data).to_hex()
}

/// Forward pass of a seeded network; returns the four operation scores.
#[pyfunction]
fn forward(widths: Vec<usize>, seed: u64, input: Vec<f64>) -> PyResult<[f64; 4]> {
    let model = DecisionModel::seeded(&widths, seed).map_err(|e| PyValueError::new_err(e.to_string()))?;
    model.forward(&input).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn dlacb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<World>()?;
    m.add_function(wrap_pyfunction!(sha256_hex, m)?)?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    Ok(())
}
