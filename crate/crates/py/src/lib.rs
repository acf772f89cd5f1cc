//! Python bindings: codes, circuit builders, simulation, fault analysis and
//! the rate model.

use std::collections::BTreeMap;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tofprep_core::builders::{build_full_toffoli, build_prep, PrepOptions};
use tofprep_core::circuit;
use tofprep_core::code::CssCode;
use tofprep_core::fault::{analyze as run_analysis, decode_outputs, AnalyzeOptions};
use tofprep_core::pauli::PauliOperator;
use tofprep_core::rates;
use tofprep_core::sim::{encode_basis, SimConfig, Simulator};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

#[pyclass(name = "Code", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCode(CssCode);

#[pymethods]
impl PyCode {
    #[staticmethod]
    fn steane() -> Self {
        PyCode(CssCode::steane())
    }

    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        CssCode::builtin(name).map(PyCode).ok_or_else(|| value_err(format!("unknown code `{name}`")))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn h_x(&self) -> Vec<u64> {
        self.0.h_x.clone()
    }

    #[getter]
    fn h_z(&self) -> Vec<u64> {
        self.0.h_z.clone()
    }

    /// `(x_bits, z_bits)` for a letter string such as `"IXIIIZI"`.
    fn syndrome(&self, letters: &str) -> PyResult<(u64, u64)> {
        let p = parse_pauli(&self.0, letters)?;
        let s = self.0.syndrome(&p);
        Ok((s.x_bits, s.z_bits))
    }

    /// Lookup correction for an error, as a letter string.
    fn correction(&self, letters: &str) -> PyResult<String> {
        let p = parse_pauli(&self.0, letters)?;
        Ok(self.0.decode(&self.0.syndrome(&p)).map_err(runtime_err)?.to_letters())
    }

    /// Logical effect of an error after lookup correction, e.g. `"I"` or `"X"`.
    fn logical_effect(&self, letters: &str) -> PyResult<String> {
        let p = parse_pauli(&self.0, letters)?;
        let fix = self.0.decode(&self.0.syndrome(&p)).map_err(runtime_err)?;
        Ok(format!("{:?}", self.0.logical_effect(&fix.compose(&p)).map_err(runtime_err)?))
    }
}

fn parse_pauli(code: &CssCode, letters: &str) -> PyResult<PauliOperator> {
    let p = PauliOperator::from_letters(letters).ok_or_else(|| value_err(format!("bad Pauli `{letters}`")))?;
    if p.n != code.n {
        return Err(value_err(format!("expected {} letters", code.n)));
    }
    Ok(p)
}

#[pyclass(name = "Circuit", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCircuit(circuit::Circuit);

#[pymethods]
impl PyCircuit {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        circuit::Circuit::from_text(text).map(PyCircuit).map_err(value_err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn code(&self) -> String {
        self.0.code.clone()
    }

    #[getter]
    fn num_timesteps(&self) -> usize {
        self.0.num_timesteps()
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.0.num_qubits()
    }

    #[getter]
    fn num_gates(&self) -> usize {
        self.0.gates.len()
    }

    fn num_locations(&self) -> usize {
        circuit::locations(&self.0).len()
    }
}

fn code_of(c: &circuit::Circuit) -> PyResult<CssCode> {
    CssCode::builtin(&c.code).ok_or_else(|| value_err(format!("unknown code `{}`", c.code)))
}

#[pyfunction]
#[pyo3(signature = (rounds = 3))]
fn shor_prep(rounds: usize) -> PyResult<PyCircuit> {
    build_prep(&CssCode::steane(), &PrepOptions::shor(rounds)).map(PyCircuit).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (rounds = 3, pfec = false))]
fn modified_prep(rounds: usize, pfec: bool) -> PyResult<PyCircuit> {
    build_prep(&CssCode::steane(), &PrepOptions::modified(rounds, pfec)).map(PyCircuit).map_err(value_err)
}

#[pyfunction]
fn full_toffoli() -> PyResult<PyCircuit> {
    build_full_toffoli(&CssCode::steane()).map(PyCircuit).map_err(value_err)
}

type Outputs = Vec<(BTreeMap<String, bool>, f64, Vec<Complex64>)>;

/// Runs the circuit noiselessly with encoded basis inputs (`{"D1": 1, ...}`)
/// and returns `(record, probability, logical amplitudes)` per branch.
#[pyfunction]
#[pyo3(signature = (circuit, inputs = None))]
fn logical_outputs(py: Python<'_>, circuit: &PyCircuit, inputs: Option<BTreeMap<String, bool>>) -> PyResult<Outputs> {
    let c = &circuit.0;
    let code = code_of(c)?;
    let blocks: Vec<(&str, bool)> = inputs.iter().flatten().map(|(k, v)| (k.as_str(), *v)).collect();
    py.detach(|| {
        let input = if blocks.is_empty() {
            None
        } else {
            Some(encode_basis(&code, &c.layout, &blocks).map_err(value_err)?)
        };
        let sim = Simulator::new(c, &code, SimConfig { hadamard_frame: true, ..SimConfig::default() })
            .map_err(runtime_err)?;
        let res = sim.run(input.as_ref(), &[]).map_err(runtime_err)?;
        decode_outputs(c, &code, &res).map_err(runtime_err)
    })
}

/// Fault analysis; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (circuit, order = 1, sample_budget = None, seed = 0, workers = 1))]
fn analyze(
    py: Python<'_>,
    circuit: &PyCircuit,
    order: usize,
    sample_budget: Option<usize>,
    seed: u64,
    workers: usize,
) -> PyResult<String> {
    let code = code_of(&circuit.0)?;
    let opts = AnalyzeOptions { order, sample_budget, seed, workers: workers.max(1), ..AnalyzeOptions::default() };
    py.detach(|| run_analysis(&circuit.0, &code, &opts).map(|r| r.to_json()).map_err(runtime_err))
}

/// Normalized logical Toffoli rates per level; columns are
/// T1, T2, T3 bit flips then T1, T2, T3 phase flips.
#[pyfunction]
#[pyo3(signature = (levels = 5, rounded = true))]
fn rate_table(levels: u32, rounded: bool) -> Vec<Vec<f64>> {
    let t = rates::rate_table(levels);
    let rows = if rounded { t.rounded() } else { t.rows.clone() };
    rows.iter().map(|r| r.to_vec()).collect()
}

#[pyfunction]
fn threshold() -> f64 {
    rates::threshold()
}

#[pymodule]
fn tofprep(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCode>()?;
    m.add_class::<PyCircuit>()?;
    m.add_function(wrap_pyfunction!(shor_prep, m)?)?;
    m.add_function(wrap_pyfunction!(modified_prep, m)?)?;
    m.add_function(wrap_pyfunction!(full_toffoli, m)?)?;
    m.add_function(wrap_pyfunction!(logical_outputs, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(rate_table, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    Ok(())
}
