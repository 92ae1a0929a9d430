//! Ergodic Monte Carlo estimates of stationary expectations.
//!
//! Each replica averages an observable along one trajectory after a burn-in;
//! confidence intervals come from the spread across independent replicas.

use crate::error::{Error, Result};
use crate::flux::NumericalFlux;
use crate::grid::GridVector;
use crate::noise::{DiscreteNoise, RngStream};
use crate::stats::{mean_and_std_error, Z_95};
use crate::stepper::{map_replicas, Stepper, StepperConfig, TrajectoryState};

/// Default burn-in as a fraction of the horizon.
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.1;

/// `Φ(v) = exp(-‖v‖²_{ℓ²})`.
pub fn phi(v: &GridVector) -> f64 {
    (-v.l2_norm_sq()).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_replicas: u64,
    pub horizon: f64,
    pub burn_in: f64,
    /// Per-replica time averages, in replica order.
    pub replica_means: Vec<f64>,
}

impl EstimatorResult {
    fn from_samples(samples: Vec<f64>, horizon: f64, burn_in: f64, z: f64) -> Self {
        let (mean, std_error) = mean_and_std_error(&samples);
        EstimatorResult {
            mean,
            std_error,
            ci_low: mean - z * std_error,
            ci_high: mean + z * std_error,
            n_replicas: samples.len() as u64,
            horizon,
            burn_in,
            replica_means: samples,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Everything that defines one chain of the scheme, except its replica index.
#[derive(Debug, Clone, Copy)]
pub struct ErgodicSetup<'a> {
    pub nf: &'a NumericalFlux,
    pub noise: &'a DiscreteNoise,
    pub cfg: StepperConfig,
    pub u0: &'a GridVector,
    pub seed: u64,
}

/// Horizon, burn-in and replica count of an ergodic estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicPlan {
    pub horizon: f64,
    pub burn_in: f64,
    pub replicas: u64,
    pub z: f64,
}

impl ErgodicPlan {
    /// Burn-in defaults to 10% of the horizon and `z` to 1.96.
    pub fn new(horizon: f64, replicas: u64) -> Result<Self> {
        ErgodicPlan {
            horizon,
            burn_in: DEFAULT_BURN_IN_FRACTION * horizon,
            replicas,
            z: Z_95,
        }
        .validated()
    }

    pub fn with_burn_in(self, burn_in: f64) -> Result<Self> {
        ErgodicPlan { burn_in, ..self }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("t_final", format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.horizon) {
            return Err(Error::config("burn_in", format!("need 0 <= burn_in < T, got {}", self.burn_in)));
        }
        if self.replicas < 2 {
            return Err(Error::config("replicas", "at least two replicas are needed for a confidence interval"));
        }
        if !(self.z > 0.0) {
            return Err(Error::config("z", "quantile must be positive"));
        }
        Ok(self)
    }

    /// `(n_burn, n)`: the averaged states are `U_l` for `n_burn <= l < n`.
    pub fn step_window(&self, dt: f64) -> Result<(u64, u64)> {
        let n = (self.horizon / dt).round() as u64;
        let n_burn = (self.burn_in / dt).round() as u64;
        if n_burn >= n {
            return Err(Error::config("burn_in", "burn-in leaves no steps to average"));
        }
        Ok((n_burn, n))
    }
}

/// `(1/(n - n_burn)) Σ_{l=n_burn}^{n-1} f(U_l)` along the trajectory of one replica.
pub fn replica_time_average<F>(setup: &ErgodicSetup<'_>, n_burn: u64, n: u64, replica: u64, observable: &F) -> Result<f64>
where
    F: Fn(&GridVector) -> f64 + ?Sized,
{
    let mut stepper = Stepper::new(setup.nf, setup.noise, setup.cfg)?;
    let mut state = TrajectoryState::new(setup.u0.clone(), RngStream::new(setup.seed, replica));
    stepper.advance(&mut state, n_burn)?;
    let mut acc = 0.0;
    for l in n_burn..n {
        acc += observable(&state.u);
        if l + 1 < n {
            stepper.advance(&mut state, 1)?;
        }
    }
    Ok(acc / (n - n_burn) as f64)
}

/// Replica-averaged ergodic estimate of `E[f(V)]` under the scheme's invariant law.
pub fn ergodic_estimate<F>(setup: &ErgodicSetup<'_>, plan: &ErgodicPlan, observable: &F) -> Result<EstimatorResult>
where
    F: Fn(&GridVector) -> f64 + Sync + ?Sized,
{
    let plan = plan.validated()?;
    let (n_burn, n) = plan.step_window(setup.cfg.dt)?;
    let samples = map_replicas(plan.replicas, |r| replica_time_average(setup, n_burn, n, r, observable))?;
    Ok(EstimatorResult::from_samples(samples, plan.horizon, plan.burn_in, plan.z))
}

/// Running averages `(t_l, (1/l) Σ_{k<l} f(U_k))` of one trajectory, recorded every `stride` steps.
pub fn running_average<F>(setup: &ErgodicSetup<'_>, n_steps: u64, stride: u64, replica: u64, observable: &F) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&GridVector) -> f64 + ?Sized,
{
    let stride = stride.max(1);
    let mut stepper = Stepper::new(setup.nf, setup.noise, setup.cfg)?;
    let mut state = TrajectoryState::new(setup.u0.clone(), RngStream::new(setup.seed, replica));
    let mut acc = 0.0;
    let mut out = Vec::with_capacity((n_steps / stride) as usize + 1);
    for l in 1..=n_steps {
        acc += observable(&state.u);
        stepper.advance(&mut state, 1)?;
        if l % stride == 0 {
            out.push((state.time(setup.cfg.dt), acc / l as f64));
        }
    }
    Ok(out)
}

/// `|I(Δt) - I(Δt_ref)|` with both sides estimated independently.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorResult {
    pub dt: f64,
    pub dt_ref: f64,
    /// Signed difference `I(Δt) - I(Δt_ref)`.
    pub signed: f64,
    /// Estimate of the absolute difference; the CI is the image of the signed CI under `|·|`.
    pub estimate: EstimatorResult,
    pub at_dt: EstimatorResult,
    pub at_ref: EstimatorResult,
}

impl WeakErrorResult {
    /// True when `value` lies in the CI of the signed difference.
    pub fn signed_ci_contains(&self, value: f64) -> bool {
        let half = self.estimate.ci_high - self.estimate.mean;
        (value - self.signed).abs() <= half
    }
}

/// Combines two independent estimates; standard errors add in quadrature.
pub fn weak_error_from_estimates(dt: f64, dt_ref: f64, at_dt: EstimatorResult, at_ref: EstimatorResult, z: f64) -> WeakErrorResult {
    let signed = at_dt.mean - at_ref.mean;
    let std_error = at_dt.std_error.hypot(at_ref.std_error);
    let mean = signed.abs();
    let lo = signed - z * std_error;
    let hi = signed + z * std_error;
    let ci_low = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
    let estimate = EstimatorResult {
        mean,
        std_error,
        ci_low,
        ci_high: mean + z * std_error,
        n_replicas: at_dt.n_replicas.min(at_ref.n_replicas),
        horizon: at_dt.horizon,
        burn_in: at_dt.burn_in,
        replica_means: Vec::new(),
    };
    WeakErrorResult {
        dt,
        dt_ref,
        signed,
        estimate,
        at_dt,
        at_ref,
    }
}

/// Weak error of `Φ` between step sizes `setup.cfg.dt` and `dt_ref`; the
/// reference chain uses `seed_ref`.
pub fn weak_error(setup: &ErgodicSetup<'_>, dt_ref: f64, seed_ref: u64, plan: &ErgodicPlan) -> Result<WeakErrorResult> {
    let reference = ErgodicSetup {
        cfg: setup.cfg.with_dt(dt_ref)?,
        seed: seed_ref,
        ..*setup
    };
    let at_ref = ergodic_estimate(&reference, plan, &phi)?;
    weak_error_from_reference(setup, at_ref, dt_ref, plan)
}

/// As [`weak_error`], reusing an already computed reference estimate.
pub fn weak_error_from_reference(setup: &ErgodicSetup<'_>, at_ref: EstimatorResult, dt_ref: f64, plan: &ErgodicPlan) -> Result<WeakErrorResult> {
    let at_dt = ergodic_estimate(setup, plan, &phi)?;
    Ok(weak_error_from_estimates(setup.cfg.dt, dt_ref, at_dt, at_ref, plan.z))
}
