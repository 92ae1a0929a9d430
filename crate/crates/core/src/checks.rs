//! Randomised suites for the scheme's discrete identities and inequalities.
//!
//! Every check draws its instances from a counter-based stream, so a run is
//! reproducible from `CheckOptions::seed`. A check passes when no instance
//! violates its relation beyond the stated slack.

use std::time::Instant;

use crate::error::Result;
use crate::flux::{burgers, drift, drift_jacobian, engquist_osher, FluxModel, NumericalFlux, SignConvention};
use crate::grid::{inner, reconstruct, GridSpec, GridVector, Phase, Sinusoid};
use crate::linops::zero_mean_fourier_basis;
use crate::noise::{discretize, NoiseModel, RngStream};
use crate::stats::mean_and_std_error;
use crate::stepper::{implicit_stage_from, map_replicas, run_coupled_pair, Stepper, StepperConfig, TrajectoryState};

/// Relative tolerance for exact identities.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Slack allowed for inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-10;

const NU: f64 = 0.1;

/// Horizon and replica counts for the trajectory-level checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryScale {
    pub coupled_steps: u64,
    pub kb_horizon: f64,
    pub kb_replicas: u64,
}

impl TrajectoryScale {
    pub const REDUCED: TrajectoryScale = TrajectoryScale {
        coupled_steps: 1_000,
        kb_horizon: 16.0,
        kb_replicas: 8,
    };
    pub const FULL: TrajectoryScale = TrajectoryScale {
        coupled_steps: 10_000,
        kb_horizon: 64.0,
        kb_replicas: 32,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub instances: usize,
    pub seed: u64,
    /// Convention used by the ℓ¹ drift contraction check; anything other
    /// than the default is a deliberate mutation.
    pub sign: SignConvention,
    pub scale: TrajectoryScale,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            instances: 1_000,
            seed: 0x5eed,
            sign: SignConvention::ZeroPositive,
            scale: TrajectoryScale::REDUCED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub violations: usize,
    /// Largest normalised violation seen; nonpositive when every instance holds.
    pub worst: f64,
    pub detail: String,
    pub seconds: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

type CheckFn = fn(&CheckOptions) -> Result<Tally>;

pub struct Check {
    pub name: &'static str,
    pub description: &'static str,
    run: CheckFn,
}

impl Check {
    pub fn run(&self, opts: &CheckOptions) -> Result<CheckOutcome> {
        let start = Instant::now();
        let t = (self.run)(opts)?;
        Ok(CheckOutcome {
            name: self.name,
            instances: t.instances,
            violations: t.violations,
            worst: t.worst,
            detail: t.detail,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Running count of instances and violations.
#[derive(Debug, Clone)]
struct Tally {
    instances: usize,
    violations: usize,
    worst: f64,
    detail: String,
}

impl Tally {
    fn new() -> Self {
        Tally {
            instances: 0,
            violations: 0,
            worst: f64::NEG_INFINITY,
            detail: String::new(),
        }
    }

    /// Records `excess`; the instance violates when `excess > 0` (or is NaN).
    fn record(&mut self, excess: f64) {
        self.instances += 1;
        if excess > 0.0 || excess.is_nan() {
            self.violations += 1;
        }
        if excess.is_nan() || excess > self.worst {
            self.worst = excess;
        }
    }

    /// `|lhs - rhs| <= tol * scale`.
    fn identity(&mut self, lhs: f64, rhs: f64, scale: f64, tol: f64) {
        let scale = scale.max(f64::MIN_POSITIVE);
        self.record((lhs - rhs).abs() / scale - tol);
    }

    /// `small <= large + slack * (1 + |small| + |large|)`.
    fn at_most(&mut self, small: f64, large: f64) {
        let scale = 1.0 + small.abs() + large.abs();
        self.record((small - large) / scale - INEQUALITY_SLACK);
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Counter-based source of random test instances.
struct Sampler {
    stream: RngStream,
    counter: u64,
}

impl Sampler {
    fn new(seed: u64, salt: u64) -> Self {
        Sampler {
            stream: RngStream::new(seed, salt),
            counter: 0,
        }
    }

    fn uniforms(&mut self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k];
        self.stream.uniforms(self.counter, &mut out);
        self.counter += 1;
        out
    }

    fn uniform(&mut self) -> f64 {
        self.uniforms(1)[0]
    }

    fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((hi - lo + 1) as f64 * self.uniform()).floor().min((hi - lo) as f64) as usize
    }

    /// `10^U(lo, hi)`.
    fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        10f64.powf(lo + (hi - lo) * self.uniform())
    }

    fn spec(&mut self, lo: usize, hi: usize) -> GridSpec {
        GridSpec::new(self.int(lo, hi)).expect("n >= 2")
    }

    /// Zero-mean vector with entries of size about `scale`.
    fn vector(&mut self, spec: GridSpec, scale: f64) -> GridVector {
        let u = self.uniforms(spec.n_cells());
        GridVector::from_centred(spec, u.iter().map(|x| scale * (2.0 * x - 1.0)).collect()).expect("finite")
    }

    /// Zero-mean vector with a random scale in `[10^lo, 10^hi]`.
    fn scaled_vector(&mut self, spec: GridSpec, lo: f64, hi: f64) -> GridVector {
        let s = self.log_uniform(lo, hi);
        self.vector(spec, s)
    }

    /// A pair `(v, w)` where `v - w` vanishes exactly on a random subset of cells.
    fn tied_pair(&mut self, spec: GridSpec, scale: f64) -> (GridVector, GridVector) {
        let v = self.vector(spec, scale);
        let n = spec.n_cells();
        let mask = self.uniforms(n);
        let d = self.uniforms(n);
        let active: Vec<usize> = (0..n).filter(|&i| mask[i] < 0.5).collect();
        let mut diff = vec![0.0; n];
        if active.len() >= 2 {
            let m = active.iter().map(|&i| d[i]).sum::<f64>() / active.len() as f64;
            for &i in &active {
                diff[i] = scale * (d[i] - m);
            }
        }
        let w: Vec<f64> = v.values().iter().zip(&diff).map(|(a, b)| a - b).collect();
        let w = GridVector::from_centred(spec, w).expect("finite");
        (v, w)
    }
}

/// Fluxes exercised by the flux-dependent checks: Burgers at two strengths and a cubic.
fn test_fluxes() -> Vec<NumericalFlux> {
    let half = 0.5_f64.sqrt();
    vec![
        engquist_osher(burgers(1.0).expect("valid")).expect("A(0) = 0"),
        engquist_osher(burgers(NU.powf(1.5)).expect("valid")).expect("A(0) = 0"),
        engquist_osher(FluxModel::polynomial(vec![0.0, -0.5, 0.0, 1.0 / 3.0], vec![-half, half]).expect("valid"))
            .expect("A(0) = 0"),
    ]
}

/// `x^{p-1}` preserving sign for even `p`.
fn odd_power(v: &GridVector, p: i32) -> GridVector {
    GridVector::from_raw(v.spec(), v.values().iter().map(|x| x.powi(p - 1)).collect())
}

fn sbp_identities(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 1);
    let mut t = Tally::new();
    for _ in 0..o.instances {
        let spec = s.spec(2, 64);
        let v = s.scaled_vector(spec, -2.0, 2.0);
        let w = s.scaled_vector(spec, -2.0, 2.0);
        let (dpv, dmw) = (v.d1_plus(), w.d1_minus());
        let scale = dpv.l2_norm() * w.l2_norm() + v.l2_norm() * dmw.l2_norm();
        t.identity(dpv.dot(&w), -v.dot(&dmw), scale, IDENTITY_TOL);
        let dpw = w.d1_plus();
        let scale2 = dpv.l2_norm() * dpw.l2_norm() + v.d2().l2_norm() * w.l2_norm();
        t.identity(dpv.dot(&dpw), -v.d2().dot(&w), scale2, IDENTITY_TOL);
    }
    Ok(t)
}

fn psi0_isometry(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 2);
    let mut t = Tally::new();
    for _ in 0..o.instances {
        let spec = s.spec(2, 64);
        let v = s.scaled_vector(spec, -2.0, 2.0);
        let r = reconstruct(&v, 0)?;
        t.identity(r.l2_norm_sq(), v.l2_norm_sq(), v.l2_norm_sq(), IDENTITY_TOL);
    }
    Ok(t)
}

fn psi1_identity(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 3);
    let mut t = Tally::new();
    for _ in 0..o.instances {
        let spec = s.spec(2, 64);
        let n = spec.n_cells() as f64;
        let v = s.scaled_vector(spec, -2.0, 2.0);
        let r1 = reconstruct(&v, 1)?;
        let r0 = reconstruct(&v, 0)?;
        let h1 = v.h1_seminorm_sq();
        t.identity(r1.l2_distance_sq(&r0)?, h1 / (3.0 * n * n), h1 / (n * n), IDENTITY_TOL);
        t.identity(r1.h1_seminorm_sq(), h1, h1, IDENTITY_TOL);
    }
    Ok(t)
}

fn psi2_bound(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 4);
    let mut t = Tally::new();
    for _ in 0..o.instances {
        let spec = s.spec(2, 64);
        let n = spec.n_cells() as f64;
        let v = s.scaled_vector(spec, -2.0, 2.0);
        let d = reconstruct(&v, 2)?.l2_distance_sq(&reconstruct(&v, 0)?)?;
        let bound = 3.0 / (20.0 * n.powi(4)) * v.d2().l2_norm_sq() + v.h1_seminorm_sq() / (2.0 * n * n);
        t.at_most(d, bound);
    }
    Ok(t)
}

fn spectrum_vs_stencil(o: &CheckOptions) -> Result<Tally> {
    let mut t = Tally::new();
    let mut s = Sampler::new(o.seed, 5);
    let sizes = (o.instances / 10).max(4);
    for _ in 0..sizes {
        let spec = s.spec(2, 256);
        let lam_max = 4.0 * (spec.n_cells() as f64).powi(2);
        for mode in zero_mean_fourier_basis(spec) {
            let e = GridVector::from_raw(spec, mode.vector.clone());
            let d2 = e.d2();
            let err = d2
                .values()
                .iter()
                .zip(&mode.vector)
                .fold(0.0_f64, |m, (a, b)| m.max((a - mode.eigenvalue * b).abs()));
            t.identity(err, 0.0, lam_max * e.linf_norm(), IDENTITY_TOL);
        }
    }
    Ok(t)
}

fn discrete_poincare(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 6);
    let mut t = Tally::new();
    for _ in 0..o.instances {
        let spec = s.spec(2, 128);
        let v = s.scaled_vector(spec, -3.0, 3.0);
        t.at_most(v.l2_norm(), v.d1_plus().l2_norm());
    }
    Ok(t)
}

fn gradient_estimate(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 7);
    let mut t = Tally::new();
    for _ in 0..o.instances {
        let spec = s.spec(2, 128);
        let v = s.scaled_vector(spec, -3.0, 3.0);
        t.at_most(v.linf_norm(), v.d1_plus().l1_norm());
    }
    Ok(t)
}

fn lp_poincare(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 8);
    let mut t = Tally::new();
    for _ in 0..o.instances {
        let spec = s.spec(2, 64);
        let v = s.scaled_vector(spec, -1.0, 1.0);
        for p in [2, 4, 6, 8] {
            let lhs = odd_power(&v, p).d1_plus().dot(&v.d1_plus());
            let rhs = 4.0 * (p - 1) as f64 / (p * p) as f64 * v.lp_norm(p as f64)?.powi(p);
            t.at_most(rhs, lhs);
        }
    }
    Ok(t)
}

fn sigma_glob(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 9);
    let mut t = Tally::new();
    for _ in 0..(o.instances / 10).max(10) {
        let spec = s.spec(3, 96);
        let k = s.int(1, 4);
        let mut modes = Vec::with_capacity(k);
        for _ in 0..k {
            let amp = s.log_uniform(-1.0, 0.5);
            let m = s.int(1, 6) as u32;
            let phase = if s.uniform() < 0.5 { Phase::Sin } else { Phase::Cos };
            modes.push(Sinusoid::new(amp, m, phase)?);
        }
        let h1: f64 = modes.iter().map(Sinusoid::h1_norm_sq).sum();
        let dn = discretize(&NoiseModel::new(modes, 0), spec);
        t.at_most(dn.max_pointwise_variance(), dn.d_bound());
        t.at_most(dn.trace_l2(), dn.d_bound());
        t.at_most(dn.d_bound(), h1);
        t.at_most(h1, dn.continuum_h2_trace());
    }
    Ok(t)
}

fn flux_monotonicity(_o: &CheckOptions) -> Result<Tally> {
    let mut t = Tally::new();
    let grid: Vec<f64> = (0..101).map(|k| -5.0 + 0.1 * k as f64).collect();
    for nf in test_fluxes() {
        let (c, p) = nf.growth_bound();
        for &v in &grid {
            t.identity(nf.abar(v, v), nf.source().a(v), 1.0 + nf.source().a(v).abs(), 1e-9);
            for &w in &grid {
                t.at_most(0.0, nf.d1_abar(v, w));
                t.at_most(nf.d2_abar(v, w), 0.0);
                t.at_most(nf.d1_abar(v, w).abs(), c * (1.0 + v.abs().powi(p as i32)));
                t.at_most(nf.d2_abar(v, w).abs(), c * (1.0 + w.abs().powi(p as i32)));
            }
        }
    }
    Ok(t)
}

fn drift_jacobian_fd(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 10);
    let mut t = Tally::new();
    let fluxes = test_fluxes();
    let h = 1e-6;
    for i in 0..o.instances {
        let nf = &fluxes[i % fluxes.len()];
        let spec = s.spec(2, 48);
        let v = s.scaled_vector(spec, -1.0, 0.5);
        let e = s.vector(spec, 1.0);
        let jac = drift_jacobian(&v, nf, NU);
        let je = jac.apply(e.values());
        let mut plus = v.clone();
        plus.axpy(h, &e);
        let mut minus = v.clone();
        minus.axpy(-h, &e);
        let fd = &drift(&plus, nf, NU) - &drift(&minus, nf, NU);
        let err = je
            .iter()
            .zip(fd.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b / (2.0 * h)).abs()));
        // Kinks of [A']± at zero make the difference quotient one-sided there.
        t.identity(err, 0.0, jac.max_norm() * e.linf_norm(), 1e-5);
    }
    Ok(t)
}

fn drift_dissipativity(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 11);
    let mut t = Tally::new();
    let fluxes = test_fluxes();
    for i in 0..o.instances {
        let nf = &fluxes[i % fluxes.len()];
        let spec = s.spec(2, 64);
        let v = s.scaled_vector(spec, -2.0, 1.0);
        t.at_most(v.dot(&drift(&v, nf, NU)), -NU * v.h1_seminorm_sq());
    }
    Ok(t)
}

fn l1_drift_contraction(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 12);
    let mut t = Tally::new();
    let fluxes = test_fluxes();
    for i in 0..o.instances {
        let nf = &fluxes[i % fluxes.len()];
        let spec = s.spec(2, 64);
        let scale = s.log_uniform(-2.0, 1.0);
        let (v, w) = if i % 2 == 0 {
            (s.vector(spec, scale), s.vector(spec, scale))
        } else {
            s.tied_pair(spec, scale)
        };
        let db = &drift(&v, nf, NU) - &drift(&w, nf, NU);
        let signs: Vec<f64> = v.values().iter().zip(w.values()).map(|(a, b)| o.sign.sign(a - b)).collect();
        let pairing = inner(&signs, db.values());
        t.at_most(pairing, 0.0);
    }
    Ok(t.with_detail(format!("sign convention {:?}", o.sign)))
}

fn stability(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 13);
    let mut t = Tally::new();
    let fluxes = test_fluxes();
    for i in 0..o.instances {
        let nf = &fluxes[i % fluxes.len()];
        let spec = s.spec(2, 64);
        let v = s.scaled_vector(spec, -1.0, 0.7);
        let mut fl = vec![0.0; spec.n_cells()];
        crate::flux::interface_fluxes(v.values(), nf, &mut fl);
        let dm = GridVector::from_raw(spec, fl).d1_minus();
        for q in [2, 4, 6] {
            t.at_most(0.0, odd_power(&v, q).dot(&dm));
        }
    }
    Ok(t)
}

fn fb0_energy(o: &CheckOptions) -> Result<Tally> {
    let mut s = Sampler::new(o.seed, 14);
    let mut t = Tally::new();
    let fluxes = [
        engquist_osher(burgers(0.0)?)?,
        engquist_osher(burgers(1.0)?)?,
    ];
    let mut max_iter = 0;
    for i in 0..o.instances {
        let nf = &fluxes[i % 2];
        let spec = s.spec(4, 64);
        let v = s.scaled_vector(spec, -1.0, 0.5);
        let dt = 2f64.powf(-1.0 - 9.0 * s.uniform());
        let cfg = StepperConfig::new(NU, dt)?;
        let a = implicit_stage_from(&v, &v, nf, &cfg)?;
        let b = implicit_stage_from(&v, &GridVector::zeros(spec), nf, &cfg)?;
        max_iter = max_iter.max(a.iterations).max(b.iterations);
        t.at_most(a.w.l2_norm_sq(), v.l2_norm_sq() - 2.0 * NU * dt * a.w.h1_seminorm_sq());
        let tol = cfg.newton_tol * (1.0 + v.l2_norm());
        t.at_most((&a.w - &b.w).l2_norm(), 10.0 * tol);
    }
    Ok(t.with_detail(format!("max Newton iterations {max_iter}")))
}

fn coupled_l1_contraction(o: &CheckOptions) -> Result<Tally> {
    let spec = GridSpec::new(32)?;
    let nf = engquist_osher(burgers(NU.powf(1.5))?)?;
    let dn = discretize(&NoiseModel::single_sine(1, o.seed)?, spec);
    let cfg = StepperConfig::new(NU, 1.0 / 1024.0)?;
    let mut s = Sampler::new(o.seed, 15);
    let u0 = s.vector(spec, 2.0);
    let v0 = s.vector(spec, 2.0);
    let d = run_coupled_pair(u0, v0, o.scale.coupled_steps, &nf, &dn, &cfg, RngStream::new(o.seed, 0))?;
    let mut t = Tally::new();
    for w in d.windows(2) {
        t.record(w[1] - w[0] - INEQUALITY_SLACK);
    }
    Ok(t.with_detail(format!("distance {:.3e} -> {:.3e}", d[0], d[d.len() - 1])))
}

/// Time average of `‖D⁺U_l‖²` over `l = 1..=n` against the stationary bound, per flux strength.
pub fn kb_bound_statistics(seed: u64, alpha: f64, horizon: f64, replicas: u64) -> Result<(f64, f64, f64)> {
    let spec = GridSpec::new(32)?;
    let nf = engquist_osher(burgers(alpha)?)?;
    let dn = discretize(&NoiseModel::single_sine(1, seed)?, spec);
    let cfg = StepperConfig::new(NU, 1.0 / 64.0)?;
    let n = cfg.steps_for(horizon);
    let averages = map_replicas(replicas, |r| {
        let mut stepper = Stepper::new(&nf, &dn, cfg)?;
        let mut state = TrajectoryState::new(GridVector::zeros(spec), RngStream::new(seed, r));
        let mut acc = 0.0;
        for _ in 0..n {
            stepper.advance(&mut state, 1)?;
            acc += state.u.h1_seminorm_sq();
        }
        Ok(acc / n as f64)
    })?;
    let (mean, se) = mean_and_std_error(&averages);
    let d = dn.d_bound();
    // u0 = 0, so the transient term vanishes.
    let bound = d / (2.0 * NU) + cfg.dt * d;
    Ok((mean, se, bound))
}

fn kb_bound(o: &CheckOptions) -> Result<Tally> {
    let mut t = Tally::new();
    let mut detail = Vec::new();
    for alpha in [0.0, NU.powf(1.5)] {
        let (mean, se, bound) = kb_bound_statistics(o.seed, alpha, o.scale.kb_horizon, o.scale.kb_replicas)?;
        t.record(mean - bound - 3.0 * se);
        detail.push(format!("alpha={alpha:.4}: {mean:.3} <= {bound:.3}"));
    }
    Ok(t.with_detail(detail.join("; ")))
}

/// All named checks, in report order.
pub fn all_checks() -> Vec<Check> {
    macro_rules! check {
        ($name:literal, $desc:literal, $f:expr) => {
            Check {
                name: $name,
                description: $desc,
                run: $f,
            }
        };
    }
    vec![
        check!("sbp_identities", "summation by parts for D+/D- and D2", sbp_identities),
        check!("psi0_isometry", "piecewise-constant reconstruction is an isometry", psi0_isometry),
        check!("psi1_identity", "linear interpolant: distance to Psi0 and H1 seminorm", psi1_identity),
        check!("psi2_bound", "quadratic reconstruction distance bound", psi2_bound),
        check!("spectrum_vs_stencil", "Fourier modes are eigenvectors of D2", spectrum_vs_stencil),
        check!("discrete_poincare", "||v|| <= ||D+ v||", discrete_poincare),
        check!("gradient_estimate", "||v||_inf <= ||D+ v||_1", gradient_estimate),
        check!("lp_poincare", "lp Poincare inequality, p = 2,4,6,8", lp_poincare),
        check!("sigma_glob", "noise constant D dominates the covariance traces", sigma_glob),
        check!("flux_monotonicity", "EO flux consistency, monotonicity and growth", flux_monotonicity),
        check!("drift_jacobian_fd", "drift Jacobian against central differences", drift_jacobian_fd),
        check!("drift_dissipativity", "<v, b(v)> <= -nu ||D+ v||^2", drift_dissipativity),
        check!("l1_drift_contraction", "<sign(v-w), b(v)-b(w)> <= 0", l1_drift_contraction),
        check!("stability", "<v^(q-1), D- Abar(v)> >= 0, q = 2,4,6", stability),
        check!("fb0_energy", "implicit-stage energy inequality and uniqueness", fb0_energy),
        check!("coupled_l1_contraction", "coupled trajectories contract in l1", coupled_l1_contraction),
        check!("kb_bound", "stationary h1 time-average bound", kb_bound),
    ]
}

pub fn find_check(name: &str) -> Option<Check> {
    all_checks().into_iter().find(|c| c.name == name)
}

pub fn run_all(opts: &CheckOptions) -> Result<Vec<CheckOutcome>> {
    all_checks().iter().map(|c| c.run(opts)).collect()
}
