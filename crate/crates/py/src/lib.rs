//! Python bindings. Models are passed as strings (`"sg:3"`, `"bg:0.2"`),
//! vectors and matrices as nested lists.

use std::path::PathBuf;

use l1dict::experiment::{format_gram, fmt_sig, parse_gram, run_phase_grid, PhaseGridConfig};
use l1dict::finite_sample;
use l1dict::identifiability::Status;
use l1dict::{Error, GroupNormParam, Method, SparsityModel};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(m) => PyOSError::new_err(m),
        Error::NotConverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn model(text: &str) -> PyResult<SparsityModel> {
    text.parse().map_err(to_py)
}

fn method(text: &str) -> PyResult<Method> {
    text.parse().map_err(to_py)
}

fn param(text: &str) -> PyResult<GroupNormParam> {
    Ok(match model(text)? {
        SparsityModel::SG(k) => GroupNormParam::Subset(k),
        SparsityModel::BG(p) => GroupNormParam::Bernoulli(p),
    })
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Gram matrix `D0ᵀD0` of a reference dictionary.
#[pyclass(name = "GramMatrix", frozen, from_py_object)]
#[derive(Clone)]
struct PyGram(l1dict::GramMatrix);

#[pymethods]
impl PyGram {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        l1dict::GramMatrix::new(matrix(rows)?).map(PyGram).map_err(to_py)
    }

    #[staticmethod]
    fn constant_mu(k: usize, mu: f64) -> PyResult<Self> {
        l1dict::constant_mu_gram(k, mu).map(PyGram).map_err(to_py)
    }

    #[staticmethod]
    fn minimal_mu(k: usize, mu: f64) -> PyResult<Self> {
        l1dict::minimal_mu_gram(k, mu).map(PyGram).map_err(to_py)
    }

    /// Parses the plain-text Gram file format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        parse_gram(text).map(PyGram).map_err(to_py)
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        rows(self.0.matrix())
    }

    fn mutual_coherence(&self) -> f64 {
        self.0.mutual_coherence()
    }

    fn to_text(&self) -> String {
        format_gram(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("GramMatrix(k={}, coherence={})", self.0.k(), fmt_sig(self.0.mutual_coherence()))
    }
}

#[pyclass(name = "Verdict", frozen, skip_from_py_object)]
struct PyVerdict(l1dict::Verdict);

#[pymethods]
impl PyVerdict {
    /// `"identifiable"`, `"not_identifiable"` or `"indeterminate"`.
    #[getter]
    fn status(&self) -> String {
        self.0.status.to_string()
    }

    #[getter]
    fn identifiable(&self) -> bool {
        self.0.status == Status::Identifiable
    }

    #[getter]
    fn lhs(&self) -> f64 {
        self.0.lhs
    }

    #[getter]
    fn rhs(&self) -> f64 {
        self.0.rhs
    }

    #[getter]
    fn margin(&self) -> f64 {
        self.0.margin
    }

    #[getter]
    fn lhs_bracket(&self) -> (f64, f64) {
        self.0.lhs_bracket
    }

    #[getter]
    fn column(&self) -> usize {
        self.0.column
    }

    #[getter]
    fn condition(&self) -> String {
        format!("{:?}", self.0.condition)
    }

    fn __repr__(&self) -> String {
        format!("Verdict(status={}, margin={})", self.0.status, fmt_sig(self.0.margin))
    }
}

#[pyclass(name = "DualCertificate", frozen, get_all, skip_from_py_object)]
struct PyCertificate {
    value: f64,
    lower: f64,
    upper: f64,
    gap: f64,
    primal_witness: Vec<f64>,
    iterations: usize,
}

#[pyfunction]
fn group_norm(w: Vec<f64>, model: &str) -> PyResult<f64> {
    l1dict::group_norm(&w, param(model)?).map_err(to_py)
}

/// Certified dual norm; `model` `"sg:k"` selects `|||·|||_k`, `"bg:p"` selects `|||·|||_p`.
#[pyfunction]
#[pyo3(signature = (z, model, tol = 1e-6))]
fn dual_norm_exact(z: Vec<f64>, model: &str, tol: f64) -> PyResult<PyCertificate> {
    let c = l1dict::dual_norm_exact(&z, param(model)?, tol).map_err(to_py)?;
    Ok(PyCertificate {
        value: c.value,
        lower: c.lower,
        upper: c.upper,
        gap: c.gap,
        primal_witness: c.primal_witness,
        iterations: c.iterations,
    })
}

/// `(lower, upper)` sandwich on the dual norm.
#[pyfunction]
fn dual_norm_bounds(z: Vec<f64>, model: &str) -> PyResult<(f64, f64)> {
    l1dict::dual_norm_bounds(&z, param(model)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (gram, model, method = "exact"))]
fn population_verdict(gram: &PyGram, model: &str, method: &str) -> PyResult<PyVerdict> {
    let m = self::model(model)?;
    l1dict::population_verdict(&gram.0, m, self::method(method)?).map(PyVerdict).map_err(to_py)
}

#[pyfunction]
fn phase_boundary_constant_mu(k: usize, model: &str) -> PyResult<f64> {
    l1dict::phase_boundary_constant_mu(k, self::model(model)?).map_err(to_py)
}

#[pyfunction]
fn cumulative_coherence(gram: &PyGram, k: usize) -> PyResult<f64> {
    l1dict::cumulative_coherence(&gram.0, k).map_err(to_py)
}

#[pyfunction]
fn p1(eps: f64, n: u64, mu: f64, k: f64) -> PyResult<f64> {
    finite_sample::p1(eps, n, mu, k).map_err(to_py)
}

#[pyfunction]
fn p2(eps: f64, n: u64, p: f64, k: f64) -> PyResult<f64> {
    finite_sample::p2(eps, n, p, k).map_err(to_py)
}

#[pyfunction]
fn p3(eps: f64, n: u64, p: f64, k: f64) -> PyResult<f64> {
    finite_sample::p3(eps, n, p, k).map_err(to_py)
}

/// Smallest `N` whose finite-sample bound reaches `target`.
#[pyfunction]
fn required_samples(gram: &PyGram, model: &str, eps: f64, target: f64) -> PyResult<u64> {
    l1dict::required_samples(&gram.0, self::model(model)?, eps, target).map_err(to_py)
}

/// `(side, probability lower bound)` at sample size `n`.
#[pyfunction]
#[pyo3(signature = (gram, model, eps, n, method = "exact"))]
fn finite_sample_bound(gram: &PyGram, model: &str, eps: f64, n: u64, method: &str) -> PyResult<(String, f64)> {
    let r = l1dict::finite_sample_report(&gram.0, self::model(model)?, eps, n, self::method(method)?).map_err(to_py)?;
    Ok((r.side.to_string(), r.prob_lower_bound))
}

/// Expected ℓ1 objective at dictionary `d` (columns are the atoms) for signals from `d0`.
#[pyfunction]
fn population_objective(d: Vec<Vec<f64>>, d0: Vec<Vec<f64>>, model: &str) -> PyResult<f64> {
    let d = l1dict::Dictionary::new(matrix(d)?).map_err(to_py)?;
    let d0 = l1dict::Dictionary::new(matrix(d0)?).map_err(to_py)?;
    l1dict::population_objective(&d, &d0, self::model(model)?).map_err(to_py)
}

/// Runs the phase-diagram sweep described by a config file and returns the CSV text.
#[pyfunction]
fn phase_diagram_csv(py: Python<'_>, config: PathBuf) -> PyResult<String> {
    let cfg = PhaseGridConfig::from_file(&config).map_err(to_py)?;
    let d = py.detach(|| run_phase_grid(&cfg)).map_err(to_py)?;
    Ok(d.to_csv_string())
}

#[pymodule]
fn l1dict_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGram>()?;
    m.add_class::<PyVerdict>()?;
    m.add_class::<PyCertificate>()?;
    m.add_function(wrap_pyfunction!(group_norm, m)?)?;
    m.add_function(wrap_pyfunction!(dual_norm_exact, m)?)?;
    m.add_function(wrap_pyfunction!(dual_norm_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(population_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(phase_boundary_constant_mu, m)?)?;
    m.add_function(wrap_pyfunction!(cumulative_coherence, m)?)?;
    m.add_function(wrap_pyfunction!(p1, m)?)?;
    m.add_function(wrap_pyfunction!(p2, m)?)?;
    m.add_function(wrap_pyfunction!(p3, m)?)?;
    m.add_function(wrap_pyfunction!(required_samples, m)?)?;
    m.add_function(wrap_pyfunction!(finite_sample_bound, m)?)?;
    m.add_function(wrap_pyfunction!(population_objective, m)?)?;
    m.add_function(wrap_pyfunction!(phase_diagram_csv, m)?)?;
    Ok(())
}
