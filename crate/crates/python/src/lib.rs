//! Python bindings: grids, fluxes, trajectories, estimators and the oracle.
//!
//! Vectors cross the boundary as lists of floats. Input vectors are
//! recentred to zero mean, the state space of the scheme.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use stochcl::analytic::{AnalyticCase, Discretisation};
use stochcl::checks::{all_checks, CheckOptions};
use stochcl::config::{Command, Config, FluxSpec};
use stochcl::estimator::{self, ErgodicPlan, ErgodicSetup};
use stochcl::flux::{burgers, drift, drift_jacobian, engquist_osher};
use stochcl::grid::project_sinusoid;
use stochcl::noise::discretize;
use stochcl::stepper::{implicit_stage_report, Diagnostics, Stepper};
use stochcl::{DiscreteNoise, Error, GridSpec, GridVector, NumericalFlux, Phase, RngStream, Sinusoid, StepperConfig, TrajectoryState};

create_exception!(pystochcl, ConfigError, PyValueError);
create_exception!(pystochcl, NumericalError, PyArithmeticError);

fn to_py(e: Error) -> PyErr {
    if e.is_config() || matches!(e, Error::Io(_)) {
        ConfigError::new_err(e.to_string())
    } else {
        NumericalError::new_err(e.to_string())
    }
}

fn vector(values: Vec<f64>) -> PyResult<GridVector> {
    let spec = GridSpec::new(values.len()).map_err(to_py)?;
    GridVector::from_centred(spec, values).map_err(to_py)
}

fn phase(name: &str) -> PyResult<Phase> {
    match name {
        "sin" => Ok(Phase::Sin),
        "cos" => Ok(Phase::Cos),
        other => Err(ConfigError::new_err(format!("phase must be 'sin' or 'cos', got '{other}'"))),
    }
}

/// Burgers flux `α u²/2`; `None` means `ν^{3/2}`.
fn burgers_flux(alpha: Option<f64>, nu: f64) -> PyResult<NumericalFlux> {
    engquist_osher(burgers(alpha.unwrap_or(nu.powf(1.5))).map_err(to_py)?).map_err(to_py)
}

/// Periodic grid of `n` cells with its difference operators.
#[pyclass(name = "Grid", module = "pystochcl", frozen)]
struct PyGrid {
    spec: GridSpec,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: usize) -> PyResult<Self> {
        Ok(PyGrid {
            spec: GridSpec::new(n).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.spec.n_cells()
    }

    /// Cell averages of `amp · sin/cos(2π m x)`.
    #[pyo3(signature = (amp, m, phase = "sin"))]
    fn project(&self, amp: f64, m: u32, phase: &str) -> PyResult<Vec<f64>> {
        let s = Sinusoid::new(amp, m, self::phase(phase)?).map_err(to_py)?;
        Ok(project_sinusoid(&s, self.spec).into_values())
    }

    fn d1_plus(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.checked(v)?.d1_plus().into_values())
    }

    fn d2(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.checked(v)?.d2().into_values())
    }

    fn l2_norm(&self, v: Vec<f64>) -> PyResult<f64> {
        Ok(self.checked(v)?.l2_norm())
    }

    fn h1_seminorm_sq(&self, v: Vec<f64>) -> PyResult<f64> {
        Ok(self.checked(v)?.h1_seminorm_sq())
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={})", self.spec.n_cells())
    }
}

impl PyGrid {
    fn checked(&self, v: Vec<f64>) -> PyResult<GridVector> {
        if v.len() != self.spec.n_cells() {
            return Err(ConfigError::new_err(format!("expected {} values, got {}", self.spec.n_cells(), v.len())));
        }
        vector(v)
    }
}

/// Engquist–Osher Burgers flux and the drift it induces.
#[pyclass(name = "Flux", module = "pystochcl", frozen)]
struct PyFlux {
    nf: NumericalFlux,
}

#[pymethods]
impl PyFlux {
    #[new]
    fn new(alpha: f64) -> PyResult<Self> {
        Ok(PyFlux {
            nf: engquist_osher(burgers(alpha).map_err(to_py)?).map_err(to_py)?,
        })
    }

    fn abar(&self, v: f64, w: f64) -> f64 {
        self.nf.abar(v, w)
    }

    fn drift(&self, v: Vec<f64>, nu: f64) -> PyResult<Vec<f64>> {
        Ok(drift(&vector(v)?, &self.nf, nu).into_values())
    }

    /// `(lower, diag, upper)` bands of the cyclic tridiagonal drift Jacobian.
    fn jacobian(&self, v: Vec<f64>, nu: f64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let j = drift_jacobian(&vector(v)?, &self.nf, nu);
        let (l, d, u) = j.bands();
        Ok((l.to_vec(), d.to_vec(), u.to_vec()))
    }

    /// Implicit stage `w - Δt b(w) = v`; returns `(w, newton_iterations)`.
    fn implicit_stage(&self, v: Vec<f64>, nu: f64, dt: f64) -> PyResult<(Vec<f64>, usize)> {
        let cfg = StepperConfig::new(nu, dt).map_err(to_py)?;
        let r = implicit_stage_report(&vector(v)?, &self.nf, &cfg).map_err(to_py)?;
        Ok((r.w.into_values(), r.iterations))
    }
}

fn diagnostics_dict(d: &Diagnostics) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("t", d.t),
        ("energy", d.energy),
        ("h1_seminorm", d.h1_seminorm),
        ("phi", d.phi),
        ("linf", d.linf),
    ])
}

/// One trajectory of the split-step scheme.
#[pyclass(name = "Simulation", module = "pystochcl")]
struct PySimulation {
    nf: NumericalFlux,
    dn: DiscreteNoise,
    cfg: StepperConfig,
    state: TrajectoryState,
}

#[pymethods]
impl PySimulation {
    /// Defaults: `N = 32`, `ν = 0.1`, `Δt = 2⁻¹⁰`, `α = ν^{3/2}`, forcing `√2 sin(2πx)`, `u₀ = 0`.
    #[new]
    #[pyo3(signature = (n = 32, nu = 0.1, dt = 0.0009765625, alpha = None, seed = 0, replica = 0, u0 = None))]
    fn new(n: usize, nu: f64, dt: f64, alpha: Option<f64>, seed: u64, replica: u64, u0: Option<Vec<f64>>) -> PyResult<Self> {
        let cfg = Config {
            n,
            nu,
            dt,
            seed,
            flux: FluxSpec::Burgers { alpha },
            ..Config::default()
        };
        Self::from_config(cfg, replica, u0)
    }

    /// Builds a simulation from the TOML accepted by the command-line tool.
    #[staticmethod]
    #[pyo3(signature = (text, replica = 0))]
    fn from_toml(text: &str, replica: u64) -> PyResult<Self> {
        let cfg = Config::from_toml_str(Command::Simulate, text).map_err(to_py)?;
        Self::from_config(cfg, replica, None)
    }

    #[getter]
    fn u(&self) -> Vec<f64> {
        self.state.u.values().to_vec()
    }

    #[getter]
    fn step_index(&self) -> u64 {
        self.state.step
    }

    #[getter]
    fn time(&self) -> f64 {
        self.state.time(self.cfg.dt)
    }

    #[getter]
    fn noise_constant(&self) -> f64 {
        self.dn.d_bound()
    }

    /// Advances `k` steps.
    #[pyo3(signature = (k = 1))]
    fn step(&mut self, py: Python<'_>, k: u64) -> PyResult<()> {
        let (nf, dn, cfg, state) = (&self.nf, &self.dn, self.cfg, &mut self.state);
        py.detach(|| Stepper::new(nf, dn, cfg)?.advance(state, k)).map_err(to_py)
    }

    fn diagnostics(&self) -> BTreeMap<&'static str, f64> {
        diagnostics_dict(&Diagnostics::of(&self.state, self.cfg.dt))
    }

    /// Runs to absolute time `t_final`, returning diagnostics every `stride` steps.
    #[pyo3(signature = (t_final, stride = 64))]
    fn run(&mut self, py: Python<'_>, t_final: f64, stride: u64) -> PyResult<Vec<BTreeMap<&'static str, f64>>> {
        let stride = stride.max(1);
        let end = self.cfg.steps_for(t_final);
        let (nf, dn, cfg, state) = (&self.nf, &self.dn, self.cfg, &mut self.state);
        let records = py
            .detach(|| -> stochcl::Result<Vec<Diagnostics>> {
                let mut stepper = Stepper::new(nf, dn, cfg)?;
                let mut out = Vec::new();
                while state.step < end {
                    let k = stride.min(end - state.step);
                    stepper.advance(state, k)?;
                    out.push(Diagnostics::of(state, cfg.dt));
                }
                Ok(out)
            })
            .map_err(to_py)?;
        Ok(records.iter().map(diagnostics_dict).collect())
    }
}

impl PySimulation {
    fn from_config(cfg: Config, replica: u64, u0: Option<Vec<f64>>) -> PyResult<Self> {
        let cfg = cfg.resolved().validated().map_err(to_py)?;
        let spec = cfg.spec().map_err(to_py)?;
        let u = match u0 {
            Some(v) if v.len() != spec.n_cells() => {
                return Err(ConfigError::new_err(format!("u0 has {} values, expected {}", v.len(), spec.n_cells())))
            }
            Some(v) => vector(v)?,
            None => cfg.initial_condition(spec).map_err(to_py)?,
        };
        Ok(PySimulation {
            nf: cfg.numerical_flux().map_err(to_py)?,
            dn: cfg.discrete_noise(spec).map_err(to_py)?,
            cfg: cfg.stepper().map_err(to_py)?,
            state: TrajectoryState::new(u, RngStream::new(cfg.seed, replica)),
        })
    }
}

/// Replica-averaged ergodic estimate with a 95% interval.
#[pyclass(name = "EstimatorResult", module = "pystochcl", get_all, frozen)]
struct PyEstimatorResult {
    mean: f64,
    std_error: f64,
    ci_low: f64,
    ci_high: f64,
    n_replicas: u64,
    horizon: f64,
    burn_in: f64,
    replica_means: Vec<f64>,
}

#[pymethods]
impl PyEstimatorResult {
    fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    fn __repr__(&self) -> String {
        format!(
            "EstimatorResult(mean={}, std_error={}, ci=[{}, {}], M={})",
            self.mean, self.std_error, self.ci_low, self.ci_high, self.n_replicas
        )
    }
}

impl From<estimator::EstimatorResult> for PyEstimatorResult {
    fn from(r: estimator::EstimatorResult) -> Self {
        PyEstimatorResult {
            mean: r.mean,
            std_error: r.std_error,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            n_replicas: r.n_replicas,
            horizon: r.horizon,
            burn_in: r.burn_in,
            replica_means: r.replica_means,
        }
    }
}

/// `exp(-‖v‖²)` in the normalised `ℓ²` norm.
#[pyfunction]
fn phi(v: Vec<f64>) -> PyResult<f64> {
    Ok(estimator::phi(&vector(v)?))
}

/// Ergodic estimate of `E[Φ]` from `u₀ = 0` under forcing `√2 sin(2π m0 x)`.
#[pyfunction]
#[pyo3(signature = (t_final, replicas, n = 32, nu = 0.1, dt = 0.0009765625, alpha = None, m0 = 1, burn_in = None, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn ergodic_estimate(
    py: Python<'_>,
    t_final: f64,
    replicas: u64,
    n: usize,
    nu: f64,
    dt: f64,
    alpha: Option<f64>,
    m0: u32,
    burn_in: Option<f64>,
    seed: u64,
) -> PyResult<PyEstimatorResult> {
    let spec = GridSpec::new(n).map_err(to_py)?;
    let nf = burgers_flux(alpha, nu)?;
    let dn = discretize(&stochcl::NoiseModel::single_sine(m0, seed).map_err(to_py)?, spec);
    let u0 = GridVector::zeros(spec);
    let mut plan = ErgodicPlan::new(t_final, replicas).map_err(to_py)?;
    if let Some(b) = burn_in {
        plan = plan.with_burn_in(b).map_err(to_py)?;
    }
    let setup = ErgodicSetup {
        nf: &nf,
        noise: &dn,
        cfg: StepperConfig::new(nu, dt).map_err(to_py)?,
        u0: &u0,
        seed,
    };
    let r = py.detach(|| estimator::ergodic_estimate(&setup, &plan, &estimator::phi)).map_err(to_py)?;
    Ok(r.into())
}

/// Closed-form quantities of the linear case with forcing `√2 sin(2π m0 x)`.
#[pyfunction]
#[pyo3(signature = (nu = 0.1, m0 = 1, n = 32, dt = 0.0009765625))]
fn analytic(nu: f64, m0: u32, n: usize, dt: f64) -> PyResult<BTreeMap<&'static str, f64>> {
    let c = AnalyticCase::new(nu, m0, n, Some(dt)).map_err(to_py)?;
    Ok(BTreeMap::from([
        ("lambda", c.lambda()),
        ("lambda_n", c.lambda_n()),
        ("g_norm_sq", c.g_norm_sq()),
        ("kappa", c.kappa()),
        ("kappa_n", c.kappa_n()),
        ("kappa_n_dt", c.kappa_n_dt().map_err(to_py)?),
        ("phi_continuum", c.continuum_phi()),
        ("phi_semi", c.stationary_phi(Discretisation::Semi).map_err(to_py)?),
        ("phi_split", c.stationary_phi(Discretisation::Split).map_err(to_py)?),
        ("w2_space", c.w2_space()),
        ("w2_space_limit", c.w2_space_limit()),
        ("w2_time", c.w2_time().map_err(to_py)?),
    ]))
}

/// Runs the structural check suites; returns `(name, passed, instances, violations)` rows.
#[pyfunction]
#[pyo3(signature = (instances = 1000, seed = 0))]
fn selfcheck(py: Python<'_>, instances: usize, seed: u64) -> PyResult<Vec<(String, bool, usize, usize)>> {
    let opts = CheckOptions {
        instances,
        seed,
        ..CheckOptions::default()
    };
    py.detach(|| {
        all_checks()
            .iter()
            .map(|c| c.run(&opts).map(|o| (o.name.to_string(), o.passed(), o.instances, o.violations)))
            .collect::<stochcl::Result<Vec<_>>>()
    })
    .map_err(to_py)
}

#[pymodule]
pub fn pystochcl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyFlux>()?;
    m.add_class::<PySimulation>()?;
    m.add_class::<PyEstimatorResult>()?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(ergodic_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(analytic, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    Ok(())
}
