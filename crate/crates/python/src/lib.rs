//! Python bindings for the `eigentrilat` solver.

use std::collections::BTreeMap;

use eigentrilat::bench::{self, SynthConfig};
use eigentrilat::ingest::{self, CalibrationRecord};
use eigentrilat::io::{parse_problem, problem_to_json, solution_to_json};
use eigentrilat::weights;
use eigentrilat::{Minimizers, MlOptions, SolverOptions, TrilaterationProblem, WeightMatrix};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

create_exception!(pyeigentrilat, EigentrilatError, PyValueError);

fn err(e: eigentrilat::Error) -> PyErr {
    EigentrilatError::new_err(e.to_string())
}

#[derive(FromPyObject)]
enum WeightsArg {
    Matrix(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
}

fn weights_from(arg: Option<WeightsArg>, m: usize) -> PyResult<WeightMatrix> {
    Ok(match arg {
        None => WeightMatrix::unit(m),
        Some(WeightsArg::Diagonal(w)) => WeightMatrix::Diagonal(w),
        Some(WeightsArg::Matrix(rows)) => {
            if rows.iter().any(|r| r.len() != rows.len()) {
                return Err(EigentrilatError::new_err("weight matrix must be square"));
            }
            let k = rows.len();
            WeightMatrix::Full(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
        }
    })
}

fn weights_to_py(py: Python<'_>, w: &WeightMatrix) -> PyResult<Py<PyAny>> {
    Ok(match w {
        WeightMatrix::Diagonal(d) => d.clone().into_pyobject(py)?.into_any().unbind(),
        WeightMatrix::Full(m) => {
            let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
            rows.into_pyobject(py)?.into_any().unbind()
        }
    })
}

/// A weighted trilateration problem.
///
/// `weights` is a per-sender list (diagonal), a full symmetric matrix, or
/// `None` for unit weights.
#[pyclass(name = "Problem", module = "pyeigentrilat", from_py_object)]
#[derive(Clone)]
struct PyProblem {
    inner: TrilaterationProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (senders, distances, weights=None))]
    fn new(senders: Vec<Vec<f64>>, distances: Vec<f64>, weights: Option<WeightsArg>) -> PyResult<Self> {
        let dim = senders.first().map_or(0, Vec::len);
        let w = weights_from(weights, senders.len())?;
        let inner = TrilaterationProblem::new(dim, senders, distances, w).validate().map_err(err)?;
        Ok(PyProblem { inner })
    }

    /// Parses the JSON problem format used by the command-line tool.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyProblem { inner: parse_problem(text).map_err(err)?.validate().map_err(err)? })
    }

    fn to_json(&self) -> String {
        problem_to_json(&self.inner).to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn senders(&self) -> Vec<Vec<f64>> {
        self.inner.senders.clone()
    }

    #[getter]
    fn distances(&self) -> Vec<f64> {
        self.inner.distances.clone()
    }

    #[getter]
    fn weights(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        weights_to_py(py, &self.inner.weights)
    }

    /// The weighted squared-range cost at `x`.
    fn cost(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_point(&x)?;
        Ok(eigentrilat::cost_h(&x, &self.inner))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_point(&x)?;
        Ok(eigentrilat::gradient_h(&x, &self.inner))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Problem(dim={}, senders={})", self.inner.dim, self.inner.len())
    }
}

impl PyProblem {
    fn check_point(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dim {
            return Err(EigentrilatError::new_err(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.inner.dim
            )));
        }
        Ok(())
    }
}

/// The global minimizers of the cost.
#[pyclass(name = "SolutionSet", module = "pyeigentrilat", skip_from_py_object)]
struct PySolutionSet {
    inner: eigentrilat::SolutionSet,
}

#[pymethods]
impl PySolutionSet {
    /// One of `unique`, `pair`, `sphere`, `ill_defined`.
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points().into_iter().cloned().collect()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.inner.cost
    }

    #[getter]
    fn center(&self) -> Option<Vec<f64>> {
        match &self.inner.minimizers {
            Minimizers::Sphere(s) => Some(s.center.clone()),
            _ => None,
        }
    }

    #[getter]
    fn radius(&self) -> Option<f64> {
        match &self.inner.minimizers {
            Minimizers::Sphere(s) => Some(s.radius),
            _ => None,
        }
    }

    #[getter]
    fn normal_space(&self) -> Option<Vec<Vec<f64>>> {
        match &self.inner.minimizers {
            Minimizers::Sphere(s) => Some(s.normal_space.clone()),
            _ => None,
        }
    }

    fn is_ill_defined(&self) -> bool {
        self.inner.is_ill_defined()
    }

    /// Distance from `truth` to the nearest reported minimizer.
    fn error_to(&self, truth: Vec<f64>) -> f64 {
        self.inner.error_to(&truth)
    }

    fn to_json(&self) -> String {
        solution_to_json(&self.inner).to_string()
    }

    fn __repr__(&self) -> String {
        format!("SolutionSet(kind={:?}, lambda={}, rank={})", self.inner.kind(), self.inner.lambda, self.inner.rank)
    }
}

fn options(rank_tol: Option<f64>) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(t) = rank_tol {
        opts.rank_tol = t;
    }
    opts
}

/// Global minimizers of the weighted cost, optionally with some receiver
/// coordinates fixed by `known` (index to value).
#[pyfunction]
#[pyo3(signature = (problem, known=None, rank_tol=None))]
fn solve(problem: &PyProblem, known: Option<BTreeMap<usize, f64>>, rank_tol: Option<f64>) -> PyResult<PySolutionSet> {
    let known = known.unwrap_or_default();
    let inner = eigentrilat::solve_with_known(&problem.inner, &known, &options(rank_tol)).map_err(err)?;
    Ok(PySolutionSet { inner })
}

/// The closed-form solver for well-conditioned geometry. Raises on
/// near-singular sender layouts.
#[pyfunction]
fn solve_simple(problem: &PyProblem) -> PyResult<Vec<f64>> {
    eigentrilat::solve_simple(&problem.inner, &SolverOptions::default()).map_err(err)
}

#[pyfunction]
fn solve_linear(problem: &PyProblem) -> PyResult<Vec<f64>> {
    eigentrilat::solve_linear(&problem.inner).map_err(err)
}

/// Local refinement of the range residuals from `x0`.
///
/// Returns a dict with `x`, `iterations`, `cost` and `gradient_norm`.
#[pyfunction]
#[pyo3(signature = (problem, x0, max_iterations=100))]
fn refine_ml<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    x0: Vec<f64>,
    max_iterations: usize,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let opts = MlOptions { max_iterations, ..MlOptions::default() };
    let fit = eigentrilat::refine_ml(&problem.inner, &x0, &opts).map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("x", fit.x)?;
    d.set_item("iterations", fit.iterations)?;
    d.set_item("cost", fit.cost)?;
    d.set_item("gradient_norm", fit.gradient_norm)?;
    Ok(d)
}

/// Diagonal weights for Gaussian range noise.
#[pyfunction]
fn weights_toa(py: Python<'_>, distances: Vec<f64>, sigma: Vec<f64>) -> PyResult<Py<PyAny>> {
    if distances.len() != sigma.len() {
        return Err(EigentrilatError::new_err("distances and sigma differ in length"));
    }
    weights_to_py(py, &weights::weights_toa(&distances, &sigma))
}

/// Diagonal weights for log-normal RSS noise.
#[pyfunction]
fn weights_rss(py: Python<'_>, d2: Vec<f64>, eta: Vec<f64>, sigma_rss: f64) -> PyResult<Py<PyAny>> {
    if d2.len() != eta.len() {
        return Err(EigentrilatError::new_err("d2 and eta differ in length"));
    }
    weights_to_py(py, &weights::weights_rss(&d2, &eta, sigma_rss))
}

#[pyfunction]
fn rss_to_distance_squared(rss: f64, c0: f64, eta: f64) -> f64 {
    weights::rss_to_distance_squared(rss, c0, eta)
}

/// Fits `(c0, eta)` from paired distances and RSS readings.
#[pyfunction]
fn calibrate_pathloss(distances: Vec<f64>, rss_dbm: Vec<f64>) -> PyResult<(f64, f64)> {
    if distances.len() != rss_dbm.len() {
        return Err(EigentrilatError::new_err("distances and rss_dbm differ in length"));
    }
    let records: Vec<CalibrationRecord> =
        distances.into_iter().zip(rss_dbm).map(|(distance, rss_dbm)| CalibrationRecord { distance, rss_dbm }).collect();
    ingest::calibrate_pathloss(&records).map_err(err)
}

/// A random instance with Gaussian range noise, and its true receiver.
#[pyfunction]
#[pyo3(signature = (dim, senders, sigma, seed=0))]
fn gen_synthetic(dim: usize, senders: usize, sigma: f64, seed: u64) -> PyResult<(PyProblem, Vec<f64>)> {
    if dim == 0 || senders == 0 || !(sigma >= 0.0) {
        return Err(EigentrilatError::new_err("need dim > 0, senders > 0 and sigma >= 0"));
    }
    let (p, x) = bench::gen_synthetic(&SynthConfig::new(dim, senders, sigma, seed));
    Ok((PyProblem { inner: p }, x))
}

#[pymodule]
fn pyeigentrilat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EigentrilatError", m.py().get_type::<EigentrilatError>())?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolutionSet>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_simple, m)?)?;
    m.add_function(wrap_pyfunction!(solve_linear, m)?)?;
    m.add_function(wrap_pyfunction!(refine_ml, m)?)?;
    m.add_function(wrap_pyfunction!(weights_toa, m)?)?;
    m.add_function(wrap_pyfunction!(weights_rss, m)?)?;
    m.add_function(wrap_pyfunction!(rss_to_distance_squared, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_pathloss, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    Ok(())
}
