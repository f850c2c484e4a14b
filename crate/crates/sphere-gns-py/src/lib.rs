//! Python bindings: collocation grids, quotient evaluation and
//! minimization, flow coefficients and Euclidean constants.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sphere_gns::functionals::{quotient, Family, InequalityParams};
use sphere_gns::optimize::{bifurcation_lambda, minimize, MinimizeOptions};
use sphere_gns::ultraspherical::{make_grid, ZonalFunction};
use sphere_gns::{euclidean, flow};

fn to_py(e: sphere_gns::Error) -> PyErr {
    use sphere_gns::Error::*;
    match e {
        NoConvergence(_) | Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_family(name: &str) -> PyResult<Family> {
    match name {
        "gns0" => Ok(Family::Gns0),
        "gns1" => Ok(Family::Gns1),
        "gns2" => Ok(Family::Gns2),
        other => Err(PyValueError::new_err(format!(
            "unknown family {other:?}; expected gns0, gns1 or gns2"
        ))),
    }
}

fn build_params(family: &str, d: u32, p: f64, theta: f64, lam: f64) -> PyResult<InequalityParams> {
    let fam = parse_family(family)?;
    InequalityParams::new(fam, d, p, theta, lam).map_err(to_py)
}

/// Gauss-Jacobi collocation grid for zonal functions on the d-sphere.
#[pyclass(name = "Grid")]
struct PyGrid {
    inner: Arc<sphere_gns::ultraspherical::Grid>,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(d: u32, n: usize) -> PyResult<Self> {
        Ok(PyGrid {
            inner: Arc::new(make_grid(d, n).map_err(to_py)?),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn d(&self) -> u32 {
        self.inner.dim()
    }

    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes().to_vec()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    /// Probability-measure integral of nodewise values.
    fn integrate(&self, values: Vec<f64>) -> PyResult<f64> {
        self.check_len(&values)?;
        Ok(self.inner.integrate_values(&values))
    }

    fn lq_norm(&self, values: Vec<f64>, q: f64) -> PyResult<f64> {
        self.check_len(&values)?;
        Ok(self.inner.lq_norm_values(&values, q))
    }

    fn laplacian(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_len(&values)?;
        Ok(self.inner.laplacian_values(&values))
    }

    fn grad_seminorm_sq(&self, values: Vec<f64>) -> PyResult<f64> {
        self.check_len(&values)?;
        Ok(self.inner.grad_seminorm_sq_values(&values))
    }
}

impl PyGrid {
    fn check_len(&self, values: &[f64]) -> PyResult<()> {
        if values.len() != self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "expected {} nodewise values, got {}",
                self.inner.len(),
                values.len()
            )));
        }
        Ok(())
    }

    fn zonal(&self, values: Vec<f64>) -> PyResult<ZonalFunction> {
        ZonalFunction::from_values(Arc::clone(&self.inner), values).map_err(to_py)
    }
}

/// Quotient value and its ingredient norms at nodewise values.
#[pyfunction]
#[pyo3(signature = (grid, values, family, d, p, lam, theta = 1.0))]
fn quotient_report(
    grid: &PyGrid,
    values: Vec<f64>,
    family: &str,
    d: u32,
    p: f64,
    lam: f64,
    theta: f64,
) -> PyResult<(f64, f64, f64, f64)> {
    grid.check_len(&values)?;
    let params = build_params(family, d, p, theta, lam)?;
    let u = grid.zonal(values)?;
    let rep = quotient(&params, &u).map_err(to_py)?;
    Ok((rep.value, rep.kinetic, rep.mass, rep.lp))
}

/// Result of a quotient minimization.
#[pyclass(name = "MinimizeResult")]
struct PyMinimizeResult {
    #[pyo3(get)]
    mu: f64,
    #[pyo3(get)]
    symmetric: bool,
    #[pyo3(get)]
    el_residual: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    minimizer: Vec<f64>,
}

/// Minimizes the family quotient at fixed lambda on an n-point grid.
#[pyfunction]
#[pyo3(signature = (family, d, p, lam, theta = 1.0, n = 96))]
fn minimize_quotient(
    family: &str,
    d: u32,
    p: f64,
    lam: f64,
    theta: f64,
    n: usize,
) -> PyResult<PyMinimizeResult> {
    let params = build_params(family, d, p, theta, lam)?;
    let grid = Arc::new(make_grid(d, n).map_err(to_py)?);
    let res = minimize(&params, &grid, None, &MinimizeOptions::default()).map_err(to_py)?;
    Ok(PyMinimizeResult {
        mu: res.mu,
        symmetric: res.symmetric,
        el_residual: res.el_residual_norm,
        iterations: res.iterations,
        minimizer: res.minimizer.values().to_vec(),
    })
}

/// Lambda at which the constant minimizer stops being optimal.
#[pyfunction]
#[pyo3(signature = (family, d, p, theta = 1.0))]
fn bifurcation(family: &str, d: u32, p: f64, theta: f64) -> PyResult<f64> {
    let params = build_params(family, d, p, theta, 1.0)?;
    Ok(bifurcation_lambda(&params))
}

/// Admissible diffusion-exponent window [m-, m+] of the flow.
#[pyfunction]
fn m_range(d: u32, p: f64) -> PyResult<(f64, f64)> {
    flow::m_range(d, p).map_err(to_py)
}

/// Quadratic-form coefficients of the flow's k-functional bound.
#[pyfunction]
fn flow_coefficients(d: u32, p: f64, m: f64) -> PyResult<(f64, f64, f64, f64, f64, f64)> {
    let fp = flow::flow_params(d, p, m).map_err(to_py)?;
    let co = flow::be_coeffs(&fp);
    Ok((co.a, co.b, co.c, co.discriminant, fp.beta, fp.kappa))
}

/// Optimal Euclidean constants (K_pd, C_GNS, theta_star).
#[pyfunction]
fn gns_constants(d: u32, p: f64) -> PyResult<(f64, f64, f64)> {
    let c = euclidean::gns_constants(d, p).map_err(to_py)?;
    Ok((c.k_pd, c.c_gns, c.theta_star))
}

/// Growth exponent gamma = 1 - theta theta_star.
#[pyfunction]
fn gamma_exponent(d: u32, p: f64, theta: f64) -> PyResult<f64> {
    euclidean::gamma_exponent(d, p, theta).map_err(to_py)
}

/// Limit constant of mu(lambda) / lambda^gamma.
#[pyfunction]
fn mu_infinity(d: u32, p: f64, theta: f64) -> PyResult<f64> {
    euclidean::mu_infinity(d, p, theta).map_err(to_py)
}

#[pymodule]
fn sphere_gns_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyMinimizeResult>()?;
    m.add_function(wrap_pyfunction!(quotient_report, m)?)?;
    m.add_function(wrap_pyfunction!(minimize_quotient, m)?)?;
    m.add_function(wrap_pyfunction!(bifurcation, m)?)?;
    m.add_function(wrap_pyfunction!(m_range, m)?)?;
    m.add_function(wrap_pyfunction!(flow_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(gns_constants, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(mu_infinity, m)?)?;
    Ok(())
}
