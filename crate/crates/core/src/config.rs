//! Experiment configuration.
//!
//! A configuration is resolved in three layers: per-command defaults, then an
//! optional TOML file, then command-line overrides. The resolved value is
//! what every output echoes in its header, so a header alone reproduces a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{burgers, engquist_osher, FluxModel, NumericalFlux};
use crate::grid::{project_sinusoid, GridSpec, GridVector, Phase, Sinusoid};
use crate::noise::{discretize, DiscreteNoise, NoiseModel};
use crate::stepper::StepperConfig;

/// Flux selection: `flux = { kind = "burgers", alpha = 0.5 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FluxSpec {
    /// `A(u) = α u²/2`; a missing `alpha` means `ν^{3/2}`.
    Burgers {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
    /// `A(u) = Σ c_k u^k` with `c_0 = 0`; `roots` lists the real zeros of `A'`.
    Polynomial {
        coeffs: Vec<f64>,
        #[serde(default)]
        roots: Vec<f64>,
    },
}

/// One forcing or initial-condition mode `amp · {sin,cos}(2π m x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub amp: f64,
    pub m: u32,
    #[serde(default = "default_phase")]
    pub phase: Phase,
}

fn default_phase() -> Phase {
    Phase::Sin
}

impl ModeSpec {
    pub fn to_sinusoid(self) -> Result<Sinusoid> {
        Sinusoid::new(self.amp, self.m, self.phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Ergodic,
    WeakError,
    SpaceRate,
    Analytic,
    Selfcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ergodic => "ergodic",
            Command::WeakError => "weak-error",
            Command::SpaceRate => "space-rate",
            Command::Analytic => "analytic",
            Command::Selfcheck => "selfcheck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub n: usize,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Diagnostic or running-average output stride, in steps.
    pub stride: u64,
    pub replicas: u64,
    /// Burn-in time; absent means 10% of `t_final`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    pub z: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Flux strengths compared by `ergodic` and `weak-error`; absent means
    /// `{0, 0.01, 1, 100} · ν^{3/2}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    pub dt_grid: Vec<f64>,
    pub dt_ref: f64,
    pub n_grid: Vec<usize>,
    pub refine_ratio: usize,
    /// Replicas for the coupled-refinement strong error; 0 skips it.
    pub mc_replicas: u64,
    pub instances: usize,
    pub flux: FluxSpec,
    pub noise: Vec<ModeSpec>,
    /// Initial condition as a sum of projected modes; empty means `u₀ = 0`.
    pub initial: Vec<ModeSpec>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            n: 32,
            nu: 0.1,
            dt: 2f64.powi(-10),
            t_final: 1.0,
            seed: 0,
            stride: 64,
            replicas: 1,
            burn_in: None,
            z: crate::stats::Z_95,
            newton_tol: crate::stepper::DEFAULT_NEWTON_TOL,
            newton_max_iter: crate::stepper::DEFAULT_NEWTON_MAX_ITER,
            alphas: None,
            dt_grid: (1..=8).rev().map(|k| 2f64.powi(-k)).collect(),
            dt_ref: 2f64.powi(-10),
            n_grid: vec![8, 16, 32, 64, 128],
            refine_ratio: 2,
            mc_replicas: 0,
            instances: 1_000,
            flux: FluxSpec::Burgers { alpha: None },
            noise: vec![ModeSpec {
                amp: std::f64::consts::SQRT_2,
                m: 1,
                phase: Phase::Sin,
            }],
            initial: Vec::new(),
        }
    }
}

impl Config {
    /// Defaults for one subcommand.
    pub fn defaults_for(cmd: Command) -> Self {
        let base = Config::default();
        match cmd {
            Command::Ergodic => Config {
                t_final: 256.0,
                stride: 1024,
                ..base
            },
            Command::WeakError => Config {
                t_final: 256.0,
                replicas: 200,
                ..base
            },
            _ => base,
        }
    }

    /// Defaults for `cmd`, overlaid with the keys present in `text`.
    pub fn from_toml_str(cmd: Command, text: &str) -> Result<Self> {
        // A full parse first, so type errors are reported with their line.
        let _: Config = toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        let mut cfg = Config::defaults_for(cmd);
        for (k, v) in file {
            cfg.set_value(&k, v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(cmd: Command, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Config::from_toml_str(cmd, &text)
    }

    /// Replaces one top-level key with a TOML value.
    pub fn set_value(&mut self, key: &str, value: toml::Value) -> Result<()> {
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::config(key, e.to_string()))?;
        table.insert(key.to_string(), value);
        *self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(key, e.message().to_string()))?;
        Ok(())
    }

    /// Applies `key=value`, where the value is TOML (`n=64`, `flux={kind="burgers",alpha=1}`).
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "expected key=value"))?;
        let key = key.trim();
        let doc = format!("v = {}", value.trim());
        let mut parsed: toml::Table = toml::from_str(&doc).map_err(|e| Error::config(key, e.message().to_string()))?;
        let v = parsed.remove("v").ok_or_else(|| Error::config(key, "missing value"))?;
        self.set_value(key, v)
    }

    /// The Burgers strength `ν^{3/2}` used when none is given.
    pub fn default_alpha(&self) -> f64 {
        self.nu.powf(1.5)
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.alphas.clone().unwrap_or_else(|| {
            let a = self.default_alpha();
            vec![0.0, 0.01 * a, a, 100.0 * a]
        })
    }

    /// Fills every implicit default so that the echo is self-contained.
    pub fn resolved(mut self) -> Self {
        if let FluxSpec::Burgers { alpha: None } = self.flux {
            self.flux = FluxSpec::Burgers {
                alpha: Some(self.default_alpha()),
            };
        }
        if self.burn_in.is_none() {
            self.burn_in = Some(crate::estimator::DEFAULT_BURN_IN_FRACTION * self.t_final);
        }
        self
    }

    pub fn validated(self) -> Result<Self> {
        if self.n < 2 {
            return Err(Error::config("n", format!("need at least 2 cells, got {}", self.n)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", format!("must be nonnegative, got {}", self.t_final)));
        }
        if self.stride == 0 {
            return Err(Error::config("stride", "must be positive"));
        }
        if self.noise.is_empty() {
            return Err(Error::config("noise", "at least one forcing mode is required"));
        }
        for m in self.noise.iter().chain(&self.initial) {
            m.to_sinusoid()?;
        }
        if self.dt_grid.iter().any(|d| !(*d > 0.0)) || !(self.dt_ref > 0.0) {
            return Err(Error::config("dt_grid", "time steps must be positive"));
        }
        if self.n_grid.iter().any(|&n| n < 2) {
            return Err(Error::config("n_grid", "grid sizes must be at least 2"));
        }
        if self.refine_ratio < 1 {
            return Err(Error::config("refine_ratio", "must be at least 1"));
        }
        self.stepper()?;
        self.flux_model()?;
        Ok(self)
    }

    /// Comment lines `# key = value` echoing the resolved configuration.
    pub fn header(&self, cmd: Command) -> String {
        let body = toml::to_string(self).unwrap_or_else(|e| format!("unserialisable config: {e}"));
        let mut out = format!("# stochcl {} v{}\n", cmd.name(), env!("CARGO_PKG_VERSION"));
        for line in body.lines().filter(|l| !l.trim().is_empty()) {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.n)
    }

    pub fn stepper(&self) -> Result<StepperConfig> {
        StepperConfig {
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            ..StepperConfig::new(self.nu, self.dt)?
        }
        .validated()
    }

    pub fn flux_model(&self) -> Result<FluxModel> {
        match &self.flux {
            FluxSpec::Burgers { alpha } => burgers(alpha.unwrap_or(self.default_alpha())),
            FluxSpec::Polynomial { coeffs, roots } => FluxModel::polynomial(coeffs.clone(), roots.clone()),
        }
    }

    pub fn numerical_flux(&self) -> Result<NumericalFlux> {
        engquist_osher(self.flux_model()?)
    }

    /// Burgers flux of strength `alpha`, regardless of `flux`.
    pub fn burgers_flux(alpha: f64) -> Result<NumericalFlux> {
        engquist_osher(burgers(alpha)?)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let modes = self.noise.iter().map(|m| m.to_sinusoid()).collect::<Result<Vec<_>>>()?;
        Ok(NoiseModel::new(modes, self.seed))
    }

    pub fn discrete_noise(&self, spec: GridSpec) -> Result<DiscreteNoise> {
        Ok(discretize(&self.noise_model()?, spec))
    }

    pub fn initial_condition(&self, spec: GridSpec) -> Result<GridVector> {
        let mut u0 = GridVector::zeros(spec);
        for m in &self.initial {
            u0.axpy(1.0, &project_sinusoid(&m.to_sinusoid()?, spec));
        }
        Ok(u0)
    }

    /// `m₀` when the forcing is the single mode `√2 sin/cos(2π m₀ x)` that the
    /// Gaussian oracle covers.
    pub fn oracle_mode(&self) -> Option<u32> {
        match self.noise.as_slice() {
            [m] if (m.amp.abs() - std::f64::consts::SQRT_2).abs() < 1e-8 => Some(m.m),
            _ => None,
        }
    }
}
