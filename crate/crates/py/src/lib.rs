//! Python bindings: fields, potentials, the integrator and the Gibbs samplers.

use chc_core::measures::{expectation, importance_sample, weak_convergence_report};
use chc_core::spectral::{distance_minus1, norm, synthesize};
use chc_core::{DriftKind, Error, MeasureKind, NoiseStream, Observable};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(chc, NumericalBlowupError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NumericalBlowup { step, .. } => NumericalBlowupError::new_err(format!("numerical blowup at step {step}")),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "SpectralField", module = "chc", from_py_object)]
#[derive(Clone)]
struct PySpectralField {
    inner: chc_core::SpectralField,
}

#[pymethods]
impl PySpectralField {
    /// Cosine coefficients `c_0..c_M`.
    #[new]
    fn new(coeffs: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: chc_core::SpectralField::new(coeffs).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn zeros(modes: usize) -> Self {
        Self {
            inner: chc_core::SpectralField::zeros(modes),
        }
    }

    /// A draw of `μ_c` from `(seed, stream)`.
    #[staticmethod]
    #[pyo3(signature = (c, modes, seed, stream = 0))]
    fn sample_mu(c: f64, modes: usize, seed: u64, stream: u64) -> PyResult<Self> {
        let inner = chc_core::gaussian::sample_mu_c(&mut NoiseStream::new(seed, stream), c, modes).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.inner.coeffs().to_vec()
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.modes()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    /// Values on the `points`-point midpoint grid.
    fn synthesize(&self, points: usize) -> PyResult<Vec<f64>> {
        Ok(synthesize(&self.inner, points).map_err(to_py)?.values().to_vec())
    }

    /// `|h|_γ`, with the mean included.
    fn norm(&self, gamma: f64) -> f64 {
        norm(&self.inner, gamma)
    }

    fn distance_minus1(&self, other: &PySpectralField) -> f64 {
        distance_minus1(&self.inner, &other.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.coeffs().len()
    }

    fn __repr__(&self) -> String {
        format!("SpectralField(modes={}, mean={})", self.inner.modes(), self.inner.mean())
    }
}

#[pyclass(name = "PotentialSpec", module = "chc", from_py_object)]
#[derive(Clone)]
struct PyPotentialSpec {
    inner: chc_core::PotentialSpec,
}

#[pymethods]
impl PyPotentialSpec {
    #[new]
    #[pyo3(signature = (lam, n, eps_clip = 1e-12, clip = false, delta = 0.5))]
    fn new(lam: f64, n: usize, eps_clip: f64, clip: bool, delta: f64) -> PyResult<Self> {
        let inner = chc_core::PotentialSpec {
            lambda: lam,
            n,
            eps_clip,
            clip,
            delta,
        }
        .validated()
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    fn f_n(&self, x: f64) -> f64 {
        self.inner.f_n(x)
    }

    fn big_f_n(&self, x: f64) -> f64 {
        self.inner.big_f_n(x)
    }

    /// The logarithmic drift; raises `ValueError` outside `(-1, 1)` unless clipping.
    fn f(&self, x: f64) -> PyResult<f64> {
        self.inner.f_log(x).map_err(to_py)
    }

    fn f_delta(&self, x: f64) -> f64 {
        self.inner.f_delta(x)
    }

    fn __repr__(&self) -> String {
        format!("PotentialSpec(lam={}, n={})", self.inner.lambda, self.inner.n)
    }
}

fn parse_drift(s: &str) -> PyResult<DriftKind> {
    match s {
        "polynomial" => Ok(DriftKind::Polynomial),
        "lipschitz" => Ok(DriftKind::Lipschitz),
        "linear" => Ok(DriftKind::Linear),
        "none" => Ok(DriftKind::None),
        _ => Err(PyValueError::new_err(format!("unknown drift '{s}'"))),
    }
}

#[pyclass(name = "SolverConfig", module = "chc", from_py_object)]
#[derive(Clone)]
struct PySolverConfig {
    inner: chc_core::SolverConfig,
}

#[pymethods]
impl PySolverConfig {
    #[new]
    #[pyo3(signature = (modes, points, dt, horizon, spec, mean = 0.0, burn_in = 0.0, noise_scale = 1.0, drift = "polynomial"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        modes: usize,
        points: usize,
        dt: f64,
        horizon: f64,
        spec: &PyPotentialSpec,
        mean: f64,
        burn_in: f64,
        noise_scale: f64,
        drift: &str,
    ) -> PyResult<Self> {
        let inner = chc_core::SolverConfig::new(modes, points, dt, horizon, spec.inner)
            .map_err(to_py)?
            .with_mean(mean)
            .with_burn_in(burn_in)
            .with_noise_scale(noise_scale)
            .with_drift(parse_drift(drift)?)
            .validated()
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    fn steps(&self) -> u64 {
        self.inner.steps()
    }

    fn stability_indicator(&self) -> f64 {
        self.inner.stability_indicator()
    }

    fn stable_dt(&self) -> f64 {
        self.inner.stable_dt()
    }

    fn with_dt(&self, dt: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.clone().with_dt(dt).validated().map_err(to_py)?,
        })
    }
}

/// Integrate from `x` over the configured horizon; returns the final field and a diagnostics dict.
#[pyfunction]
#[pyo3(signature = (x, cfg, seed, stream = 0))]
fn simulate<'py>(
    py: Python<'py>,
    x: &PySpectralField,
    cfg: &PySolverConfig,
    seed: u64,
    stream: u64,
) -> PyResult<(PySpectralField, Bound<'py, PyDict>)> {
    let (xi, c) = (x.inner.clone(), cfg.inner.clone());
    let (out, diag) = py
        .detach(move || chc_core::simulate(&xi, &c, NoiseStream::new(seed, stream)))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("steps_completed", diag.steps_completed)?;
    d.set_item("mean_drift", diag.mean_drift)?;
    d.set_item("overshoot", diag.overshoot)?;
    d.set_item("drift_l1", diag.drift_l1)?;
    Ok((PySpectralField { inner: out }, d))
}

fn parse_kind(s: &str) -> PyResult<MeasureKind> {
    match s {
        "mu_c" => Ok(MeasureKind::MuC),
        "nu_n" => Ok(MeasureKind::NuN),
        "nu_limit" => Ok(MeasureKind::NuLimit),
        _ => Err(PyValueError::new_err(format!("unknown measure '{s}'"))),
    }
}

fn parse_psi(list: &[String]) -> PyResult<Vec<Observable>> {
    list.iter().map(|s| s.parse::<Observable>().map_err(to_py)).collect()
}

/// Self-normalized estimates `{psi: (estimate, se)}` under one measure, plus `"ess"`.
#[pyfunction]
#[pyo3(signature = (kind, c, modes, points, spec, count, seed, psi))]
#[allow(clippy::too_many_arguments)]
fn sample_measure<'py>(
    py: Python<'py>,
    kind: &str,
    c: f64,
    modes: usize,
    points: usize,
    spec: &PyPotentialSpec,
    count: usize,
    seed: u64,
    psi: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = parse_kind(kind)?;
    let observables = parse_psi(&psi)?;
    let spec = spec.inner;
    let estimates = py
        .detach(move || -> chc_core::Result<_> {
            let sample = importance_sample(NoiseStream::new(seed, 0), c, modes, points, &spec, kind, count)?;
            let values = observables
                .iter()
                .map(|o| expectation(&sample, o))
                .collect::<chc_core::Result<Vec<_>>>()?;
            Ok((values, sample.ess))
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    for (id, e) in psi.iter().zip(&estimates.0) {
        d.set_item(id, (e.estimate, e.se))?;
    }
    d.set_item("ess", estimates.1)?;
    Ok(d)
}

/// Rows `(n, psi_id, estimate, se)` of the weak-convergence table; `n` is `"limit"` for the log measure.
#[pyfunction]
#[pyo3(signature = (c, modes, points, lam, n_list, psi, count, seed))]
#[allow(clippy::too_many_arguments)]
fn weak_convergence(
    py: Python<'_>,
    c: f64,
    modes: usize,
    points: usize,
    lam: f64,
    n_list: Vec<usize>,
    psi: Vec<String>,
    count: usize,
    seed: u64,
) -> PyResult<Vec<(String, String, f64, f64)>> {
    let observables = parse_psi(&psi)?;
    let report = py
        .detach(move || {
            weak_convergence_report(NoiseStream::new(seed, 0), c, modes, points, lam, &n_list, &observables, count)
        })
        .map_err(to_py)?;
    Ok(report
        .rows()
        .into_iter()
        .map(|r| (r.n, r.psi_id, r.estimate, r.se))
        .collect())
}

#[pymodule]
fn chc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectralField>()?;
    m.add_class::<PyPotentialSpec>()?;
    m.add_class::<PySolverConfig>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sample_measure, m)?)?;
    m.add_function(wrap_pyfunction!(weak_convergence, m)?)?;
    m.add("NumericalBlowupError", m.py().get_type::<NumericalBlowupError>())?;
    Ok(())
}
