//! Python bindings for `rescap`.
//!
//! Models are built from the same TOML configuration the command-line tool
//! reads. Structured results come back as plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use rescap::cli::{self, Command};
use rescap::config::RunConfig;
use rescap::dynamics::classify;
use rescap::error::Error;
use rescap::specfun::{self, EllipticModulus};
use rescap::stochastic;
use rescap::systems::PerturbedSystem;
use rescap::trigpoly::{build_averaged, AveragedSystem};
use serde::Serialize;
use std::path::PathBuf;

create_exception!(
    rescap_py,
    RescapError,
    PyException,
    "Analysis failure; `exit_code` matches the command-line tool."
);

fn to_py(e: Error) -> PyErr {
    let err = RescapError::new_err(e.to_string());
    Python::attach(|py| {
        let value = err.value(py);
        let _ = value.setattr("exit_code", e.exit_code());
    });
    err
}

/// Converts any serializable value into Python objects through JSON.
fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_config(config: &str) -> PyResult<RunConfig> {
    let trimmed = config.trim_start();
    if trimmed.starts_with('{') {
        RunConfig::from_json_str(config).map_err(to_py)
    } else {
        RunConfig::from_toml_str(config).map_err(to_py)
    }
}

/// A configured system together with its averaged normal form.
#[pyclass(frozen)]
struct Model {
    config: RunConfig,
    system: Box<dyn PerturbedSystem>,
    averaged: AveragedSystem,
}

#[pymethods]
impl Model {
    /// Builds the model from a TOML (or JSON report) string; empty means defaults.
    #[new]
    #[pyo3(signature = (config = ""))]
    fn new(config: &str) -> PyResult<Self> {
        let config = parse_config(config)?.resolved().map_err(to_py)?;
        let system = config.build_system().map_err(to_py)?;
        let averaged = build_averaged(system.as_ref(), config.averaging.order).map_err(to_py)?;
        Ok(Self {
            config,
            system,
            averaged,
        })
    }

    /// The fully resolved configuration.
    #[getter]
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &self.config)
    }

    #[getter]
    fn name(&self) -> &str {
        self.system.name()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.system.epsilon()
    }

    /// Resonant amplitude, frequency slope and orders.
    fn resonance(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, self.system.resonance())
    }

    /// Natural frequency and its first `order` derivatives at amplitude `r`.
    #[pyo3(signature = (r, order = 0))]
    fn nu(&self, r: f64, order: usize) -> PyResult<Vec<f64>> {
        self.system.nu_derivatives(r, order).map_err(to_py)
    }

    /// Drift of the simulation chart.
    fn drift(&self, state: [f64; 2], t: f64) -> PyResult<[f64; 2]> {
        self.system.drift(state, t).map_err(to_py)
    }

    /// Diffusion matrix of the simulation chart.
    fn diffusion(&self, state: [f64; 2], t: f64) -> PyResult<[[f64; 2]; 2]> {
        self.system.diffusion(state, t).map_err(to_py)
    }

    /// Polar amplitude and angle of a chart state.
    fn to_polar(&self, state: [f64; 2]) -> PyResult<(f64, f64)> {
        self.system.to_polar(state).map_err(to_py)
    }

    fn from_polar(&self, r: f64, phi: f64) -> PyResult<[f64; 2]> {
        self.system.from_polar(r, phi).map_err(to_py)
    }

    /// The angle function whose zeros are the locking candidates.
    fn lambda_at(&self, psi: f64) -> f64 {
        self.averaged.lambda_at(psi)
    }

    /// Right-hand side of the truncated averaged system.
    fn averaged_field(&self, rho: f64, psi: f64, t: f64) -> PyResult<[f64; 2]> {
        self.averaged.field(rho, psi, t).map_err(to_py)
    }

    /// Averaged coefficient tables.
    fn tables(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &self.averaged.tables())
    }

    /// Regime report of the averaged system.
    fn classify(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let report = classify(&self.averaged).map_err(to_py)?;
        to_object(py, &report)
    }

    /// Stability horizon for the configured `l` and start time; `None` when infinite.
    fn horizon(&self) -> PyResult<Option<f64>> {
        let res = self.system.resonance();
        let mc = &self.config.monte_carlo;
        let t_star = mc.t_star.unwrap_or_default();
        let h = stochastic::t_epsilon(
            self.system.envelope(),
            res.p,
            res.n,
            self.system.epsilon(),
            mc.l,
            t_star,
        )
        .map_err(to_py)?;
        Ok(h.finite())
    }

    /// Monte Carlo capture statistics with the configured settings.
    #[pyo3(signature = (n_paths = None, seed = None))]
    fn capture(
        &self,
        py: Python<'_>,
        n_paths: Option<usize>,
        seed: Option<u64>,
    ) -> PyResult<Py<PyAny>> {
        let mut cfg = self.config.clone();
        if let Some(n) = n_paths {
            cfg.monte_carlo.n_paths = n;
        }
        if let Some(s) = seed {
            cfg.monte_carlo.seed = s;
        }
        let stats = py.detach(|| cli::capture_stats(&cfg)).map_err(to_py)?;
        to_object(py, &stats)
    }

    fn __repr__(&self) -> String {
        let res = self.system.resonance();
        format!(
            "Model({}, r0={:.6}, eps={})",
            self.system.name(),
            res.r0,
            self.system.epsilon()
        )
    }
}

/// Counter-based Gaussian noise for one path.
#[pyclass]
struct NoiseStream(stochastic::NoiseStream);

#[pymethods]
impl NoiseStream {
    #[new]
    fn new(seed: u64, index: u64) -> Self {
        Self(stochastic::NoiseStream::new(seed, index))
    }

    /// `count` Wiener increments over steps of length `dt`.
    fn increments(&mut self, dt: f64, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count + 1);
        while out.len() < count {
            out.extend_from_slice(&self.0.increments(dt));
        }
        out.truncate(count);
        out
    }
}

/// Runs a command-line subcommand and returns its report.
#[pyfunction]
#[pyo3(signature = (command, config = "", out = None))]
fn run(py: Python<'_>, command: &str, config: &str, out: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let cmd = match command {
        "resonance" => Command::Resonance,
        "averaged" => Command::Averaged,
        "classify" => Command::Classify,
        "simulate" => Command::Simulate,
        "capture" => Command::Capture,
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    };
    let mut cfg = parse_config(config)?;
    if let Some(dir) = out {
        cfg.output.directory = dir;
    }
    let report = py.detach(|| cli::run(cmd, &cfg)).map_err(to_py)?;
    to_object(py, &report)
}

/// Jacobi `(sn, cn, dn)` at argument `u` and modulus `k`.
#[pyfunction]
fn jacobi_sn_cn_dn(u: f64, k: f64) -> PyResult<(f64, f64, f64)> {
    let m = EllipticModulus::new(k).map_err(to_py)?;
    Ok(specfun::jacobi_sn_cn_dn(u, m))
}

/// Complete elliptic integral of the first kind.
#[pyfunction]
fn ellint_k(k: f64) -> PyResult<f64> {
    specfun::ellint_k(EllipticModulus::new(k).map_err(to_py)?).map_err(to_py)
}

/// Wilson score interval at 95% for `k` successes in `n` trials.
#[pyfunction]
fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    stochastic::wilson_interval(k, n)
}

#[pymodule]
pub fn rescap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RescapError", m.py().get_type::<RescapError>())?;
    m.add_class::<Model>()?;
    m.add_class::<NoiseStream>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(jacobi_sn_cn_dn, m)?)?;
    m.add_function(wrap_pyfunction!(ellint_k, m)?)?;
    m.add_function(wrap_pyfunction!(wilson_interval, m)?)?;
    Ok(())
}
