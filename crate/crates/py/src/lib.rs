//! Python bindings: polynomials, constraint systems, the solver and the
//! exact certificate pipeline.

use gramsos::bench;
use gramsos::exact::{verify_certificate, CertificateFile};
use gramsos::grammap::ConstraintFile;
use gramsos::pipeline::PipelineOutcome;
use gramsos::polyalg::{fmt_rational, parse_rational};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn basis_option(name: &str) -> PyResult<gramsos::BasisOption> {
    match name {
        "full" => Ok(gramsos::BasisOption::Full),
        "homogeneous" => Ok(gramsos::BasisOption::Homogeneous),
        other => Err(PyValueError::new_err(format!("unknown basis `{other}`; use full or homogeneous"))),
    }
}

/// Multivariate polynomial with rational coefficients in `x1, x2, ...`.
#[pyclass(name = "Polynomial", module = "gramsos_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPolynomial {
    inner: gramsos::Polynomial,
}

#[pymethods]
impl PyPolynomial {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        gramsos::parse_polynomial(text).map(|inner| PyPolynomial { inner }).map_err(value_err)
    }

    #[getter]
    fn degree(&self) -> u32 {
        self.inner.degree()
    }

    #[getter]
    fn nvars(&self) -> usize {
        self.inner.nvars()
    }

    /// Exact value at a point of integers or `"num/den"` strings, returned as a string.
    fn eval(&self, point: Vec<String>) -> PyResult<String> {
        let pt = point.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>, _>>().map_err(value_err)?;
        self.inner.eval(&pt).map(|v| fmt_rational(&v)).map_err(value_err)
    }

    fn __add__(&self, other: &PyPolynomial) -> Self {
        PyPolynomial { inner: &self.inner + &other.inner }
    }

    fn __sub__(&self, other: &PyPolynomial) -> Self {
        PyPolynomial { inner: &self.inner - &other.inner }
    }

    fn __mul__(&self, other: &PyPolynomial) -> Self {
        PyPolynomial { inner: &self.inner * &other.inner }
    }

    fn __eq__(&self, other: &PyPolynomial) -> bool {
        self.inner == other.inner
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Polynomial('{}')", self.inner)
    }
}

/// Linear constraints `A(W) = b` of a Gram representation.
#[pyclass(name = "ConstraintSystem", module = "gramsos_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyConstraintSystem {
    inner: gramsos::ConstraintSystem,
}

#[pymethods]
impl PyConstraintSystem {
    /// Builds the coefficient-matching system of `poly` over a basis.
    #[staticmethod]
    #[pyo3(signature = (poly, basis = "full"))]
    fn from_polynomial(poly: &PyPolynomial, basis: &str) -> PyResult<Self> {
        let b = gramsos::build_basis(&poly.inner, &basis_option(basis)?).map_err(value_err)?;
        gramsos::build_constraints(&poly.inner, &b).map(|inner| PyConstraintSystem { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file: ConstraintFile = serde_json::from_str(text).map_err(value_err)?;
        gramsos::ConstraintSystem::from_json(&file).map(|inner| PyConstraintSystem { inner }).map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_json()).map_err(value_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b().to_vec()
    }

    /// `A(W)` for a symmetric matrix given as nested lists.
    fn apply(&self, w: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let w = gramsos::SymMatrix::from_rows(&w).map_err(value_err)?;
        self.inner.apply(&w).map_err(value_err)
    }

    /// `A^*(y)` as nested lists.
    fn adjoint(&self, y: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.adjoint(&y).map(|m| m.to_rows()).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("ConstraintSystem(n={}, p={})", self.inner.n(), self.inner.p())
    }
}

#[pyclass(name = "SolveResult", module = "gramsos_py", frozen, get_all)]
pub struct PySolveResult {
    w: Vec<Vec<f64>>,
    rel_err: f64,
    iterations: usize,
    rank: usize,
    converged: bool,
    fixed_point_residual: f64,
    eigenvalues: Vec<f64>,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!("SolveResult(rel_err={:.3e}, iterations={}, rank={}, converged={})", self.rel_err, self.iterations, self.rank, self.converged)
    }
}

fn solver_config(variant: &str, eps: f64, max_iter: usize, mu_bar: Option<f64>, continuation: bool) -> PyResult<gramsos::SolverConfig> {
    let mut c = gramsos::SolverConfig::with_variant(variant.parse().map_err(value_err)?);
    c.epsilon = eps;
    c.max_iter = max_iter;
    c.mu_bar = mu_bar;
    c.continuation = continuation;
    c.validate().map_err(value_err)?;
    Ok(c)
}

/// Runs `mfpc`, `mfpc-bb` or `afpc-bb` on a constraint system.
#[pyfunction]
#[pyo3(signature = (system, variant = "afpc-bb", eps = 1e-3, max_iter = 1000, mu_bar = None, continuation = true))]
fn solve(py: Python<'_>, system: &PyConstraintSystem, variant: &str, eps: f64, max_iter: usize, mu_bar: Option<f64>, continuation: bool) -> PyResult<PySolveResult> {
    let cfg = solver_config(variant, eps, max_iter, mu_bar, continuation)?;
    let cs = system.inner.clone();
    let res = py.detach(move || gramsos::solve(&cs, &cfg)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PySolveResult {
        w: res.w.to_rows(),
        rel_err: res.rel_err,
        iterations: res.iterations,
        rank: res.rank,
        converged: res.converged,
        fixed_point_residual: res.fixed_point_residual,
        eigenvalues: res.eigenvalues,
    })
}

/// Outcome of the certificate pipeline. Rationals are strings such as `"3/4"`.
#[pyclass(name = "Certificate", module = "gramsos_py", frozen, get_all)]
pub struct PyCertificate {
    exact: bool,
    weights: Vec<String>,
    squares: Vec<String>,
    gram: Vec<Vec<String>>,
    basis: Vec<String>,
    rank: Option<usize>,
    failure: Option<String>,
}

#[pymethods]
impl PyCertificate {
    /// JSON accepted by `verify` and by the command-line tool.
    fn to_json(&self) -> PyResult<String> {
        let file = CertificateFile {
            exact: self.exact,
            weights: self.weights.clone(),
            squares: self.squares.clone(),
            gram: self.gram.clone(),
            basis: Some(self.basis.clone()),
        };
        serde_json::to_string_pretty(&file).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Certificate(exact={}, squares={})", self.exact, self.squares.len())
    }
}

fn certificate_of(o: PipelineOutcome) -> PyCertificate {
    let basis: Vec<String> = o.basis.monomials().iter().map(|m| m.to_string()).collect();
    match o.certificate {
        Some(c) => {
            let f = c.to_file();
            PyCertificate {
                exact: c.exact,
                weights: f.weights,
                squares: f.squares,
                gram: f.gram,
                basis,
                rank: o.rank,
                failure: c.failure.map(|e| e.to_string()),
            }
        }
        None => PyCertificate {
            exact: false,
            weights: vec![],
            squares: vec![],
            gram: vec![],
            basis,
            rank: o.rank,
            failure: o.attempts.last().map(|a| a.outcome.clone()),
        },
    }
}

/// Searches for an exact rational sum-of-squares certificate of `poly`.
#[pyfunction]
#[pyo3(signature = (poly, basis = "full", rank = None, variant = "afpc-bb", eps = 1e-3, max_iter = 1000))]
fn certify(py: Python<'_>, poly: &PyPolynomial, basis: &str, rank: Option<usize>, variant: &str, eps: f64, max_iter: usize) -> PyResult<PyCertificate> {
    let cfg = gramsos::PipelineConfig {
        basis: basis_option(basis)?,
        solver: solver_config(variant, eps, max_iter, None, true)?,
        rank,
        ..Default::default()
    };
    cfg.validate().map_err(value_err)?;
    let f = poly.inner.clone();
    let out = py.detach(move || gramsos::certify_polynomial(&f, &cfg)).map_err(|e| PyRuntimeError::new_err(format!("{} stage: {}", e.stage, e.source)))?;
    Ok(certificate_of(out))
}

/// Re-checks a certificate JSON in exact arithmetic. Returns `(exact, problems)`.
#[pyfunction]
fn verify(poly: &PyPolynomial, certificate_json: &str) -> PyResult<(bool, Vec<String>)> {
    let file: CertificateFile = serde_json::from_str(certificate_json).map_err(value_err)?;
    let rep = verify_certificate(&poly.inner, &file).map_err(value_err)?;
    Ok((rep.exact, rep.problems))
}

/// `r (2n - r + 1) / 2` divided by `p`.
#[pyfunction]
fn freedom_ratio(n: usize, r: usize, p: usize) -> f64 {
    bench::freedom_ratio(n, r, p)
}

/// Planted instance `f = mon^T L L^T mon` with an integer `n x r` factor.
/// Returns `(polynomial, system, freedom_ratio)`.
#[pyfunction]
#[pyo3(signature = (n, r, seed, entry_bound = 5))]
fn random_instance(n: usize, r: usize, seed: u64, entry_bound: i64) -> PyResult<(PyPolynomial, PyConstraintSystem, f64)> {
    let inst = bench::random_instance(n, r, seed, entry_bound).map_err(value_err)?;
    Ok((PyPolynomial { inner: inst.f }, PyConstraintSystem { inner: inst.cs }, inst.fr))
}

#[pymodule]
fn gramsos_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolynomial>()?;
    m.add_class::<PyConstraintSystem>()?;
    m.add_class::<PySolveResult>()?;
    m.add_class::<PyCertificate>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(freedom_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(random_instance, m)?)?;
    Ok(())
}
