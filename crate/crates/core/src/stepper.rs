//! Split-step backward Euler: a Newton-solved implicit drift stage followed
//! by an additive noise increment.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flux::{drift_into, drift_jacobian_into, NumericalFlux};
use crate::grid::{inner, reconstruct, GridSpec, GridVector};
use crate::linops::CyclicTridiag;
use crate::noise::{DiscreteNoise, RngStream};

pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
pub const DEFAULT_RECENTRE_EVERY: u64 = 64;
/// Maximum number of step halvings in the Newton line search.
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub nu: f64,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub recentre_every: u64,
}

impl StepperConfig {
    pub fn new(nu: f64, dt: f64) -> Result<Self> {
        StepperConfig {
            nu,
            dt,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
            recentre_every: DEFAULT_RECENTRE_EVERY,
        }
        .validated()
    }

    pub fn with_dt(self, dt: f64) -> Result<Self> {
        StepperConfig { dt, ..self }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::config("nu", format!("viscosity must be positive, got {}", self.nu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::config("newton_tol", "must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::config("newton_max_iter", "must be at least 1"));
        }
        if self.recentre_every == 0 {
            return Err(Error::config("recentre_every", "must be at least 1"));
        }
        Ok(self)
    }

    /// Number of steps covering `[0, t]`, rounded to the nearest integer.
    pub fn steps_for(&self, t: f64) -> u64 {
        (t / self.dt).round().max(0.0) as u64
    }
}

/// Outcome of one implicit solve.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub w: GridVector,
    pub iterations: usize,
    pub residual: f64,
}

/// Scratch buffers for the implicit stage; reused across steps.
#[derive(Debug, Clone)]
struct Workspace {
    flux: Vec<f64>,
    drift: Vec<f64>,
    residual: Vec<f64>,
    trial: Vec<f64>,
    trial_residual: Vec<f64>,
    jac: CyclicTridiag,
    xi: Vec<f64>,
    increment: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, n_modes: usize) -> Self {
        Workspace {
            flux: vec![0.0; n],
            drift: vec![0.0; n],
            residual: vec![0.0; n],
            trial: vec![0.0; n],
            trial_residual: vec![0.0; n],
            jac: CyclicTridiag::zeros(n),
            xi: vec![0.0; n_modes],
            increment: vec![0.0; n],
        }
    }
}

/// `F(w) = w - v - Δt b(w)` into `out`; returns `‖F(w)‖_{ℓ²}`.
fn residual_into(w: &[f64], v: &[f64], nf: &NumericalFlux, cfg: &StepperConfig, flux: &mut [f64], drift: &mut [f64], out: &mut [f64]) -> f64 {
    drift_into(w, nf, cfg.nu, flux, drift);
    for i in 0..w.len() {
        out[i] = w[i] - v[i] - cfg.dt * drift[i];
    }
    inner(out, out).sqrt()
}

fn solve_stage(v: &GridVector, guess: &[f64], nf: &NumericalFlux, cfg: &StepperConfig, ws: &mut Workspace) -> Result<StageReport> {
    let vv = v.values();
    let tol = cfg.newton_tol * (1.0 + v.l2_norm());
    let mut w = guess.to_vec();
    let mut rn = residual_into(&w, vv, nf, cfg, &mut ws.flux, &mut ws.drift, &mut ws.residual);
    if !rn.is_finite() {
        return Err(Error::NonConvergence { iterations: 0, residual: rn });
    }
    let mut iterations = 0;
    while rn > tol {
        if iterations == cfg.newton_max_iter {
            return Err(Error::NonConvergence { iterations, residual: rn });
        }
        iterations += 1;
        drift_jacobian_into(&w, nf, cfg.nu, &mut ws.jac);
        ws.jac.make_identity_minus(cfg.dt);
        ws.residual.iter_mut().for_each(|r| *r = -*r);
        let delta = ws.jac.solve(&ws.residual)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            for i in 0..w.len() {
                ws.trial[i] = w[i] + lambda * delta[i];
            }
            let rt = residual_into(&ws.trial, vv, nf, cfg, &mut ws.flux, &mut ws.drift, &mut ws.trial_residual);
            if rt < rn {
                std::mem::swap(&mut w, &mut ws.trial);
                std::mem::swap(&mut ws.residual, &mut ws.trial_residual);
                rn = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence { iterations, residual: rn });
        }
    }
    let mut w = GridVector::from_raw(v.spec(), w);
    w.recentre();
    Ok(StageReport {
        w,
        iterations,
        residual: rn,
    })
}

/// Solves `w = v + Δt b(w)` starting from `w₀ = v`.
pub fn implicit_stage(v: &GridVector, nf: &NumericalFlux, cfg: &StepperConfig) -> Result<GridVector> {
    implicit_stage_report(v, nf, cfg).map(|r| r.w)
}

pub fn implicit_stage_report(v: &GridVector, nf: &NumericalFlux, cfg: &StepperConfig) -> Result<StageReport> {
    implicit_stage_from(v, v, nf, cfg)
}

/// Solves `w = v + Δt b(w)` starting from an arbitrary initial guess.
pub fn implicit_stage_from(v: &GridVector, guess: &GridVector, nf: &NumericalFlux, cfg: &StepperConfig) -> Result<StageReport> {
    if guess.spec() != v.spec() {
        return Err(Error::domain("initial guess lives on a different grid"));
    }
    let mut ws = Workspace::new(v.len(), 0);
    solve_stage(v, guess.values(), nf, cfg, &mut ws)
}

/// `(U_n, U_{n-1/2})` together with the stream that drives it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub step: u64,
    pub u: GridVector,
    pub u_half: GridVector,
    pub rng: RngStream,
}

impl TrajectoryState {
    pub fn new(u0: GridVector, rng: RngStream) -> Self {
        TrajectoryState {
            step: 0,
            u_half: u0.clone(),
            u: u0,
            rng,
        }
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.step as f64 * dt
    }
}

/// A scheme instance bound to one flux, noise and configuration, owning its scratch space.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    nf: &'a NumericalFlux,
    dn: &'a DiscreteNoise,
    cfg: StepperConfig,
    ws: Workspace,
}

impl<'a> Stepper<'a> {
    pub fn new(nf: &'a NumericalFlux, dn: &'a DiscreteNoise, cfg: StepperConfig) -> Result<Self> {
        let cfg = cfg.validated()?;
        Ok(Stepper {
            nf,
            dn,
            cfg,
            ws: Workspace::new(dn.spec().n_cells(), dn.n_modes()),
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn spec(&self) -> GridSpec {
        self.dn.spec()
    }

    pub fn implicit_stage(&mut self, v: &GridVector) -> Result<StageReport> {
        if v.spec() != self.spec() {
            return Err(Error::domain("state and noise live on different grids"));
        }
        solve_stage(v, v.values(), self.nf, &self.cfg, &mut self.ws)
    }

    /// One step whose noise uses the stream's normals for counter `state.step`.
    pub fn step(&mut self, state: &mut TrajectoryState) -> Result<()> {
        let mut xi = std::mem::take(&mut self.ws.xi);
        state.rng.normals(state.step, &mut xi);
        let out = self.step_with_normals(state, &xi);
        self.ws.xi = xi;
        out
    }

    /// One step with caller-supplied standard normals `ξ_k`.
    pub fn step_with_normals(&mut self, state: &mut TrajectoryState, xi: &[f64]) -> Result<()> {
        let stage = self.implicit_stage(&state.u)?;
        self.dn.increment_from_normals_into(self.cfg.dt, xi, &mut self.ws.increment);
        let mut next = stage.w.clone();
        for (a, b) in next.values_mut().iter_mut().zip(&self.ws.increment) {
            *a += b;
        }
        state.step += 1;
        if state.step.is_multiple_of(self.cfg.recentre_every) {
            let m = next.mean();
            next.values_mut().iter_mut().for_each(|x| *x -= m);
        }
        state.u_half = stage.w;
        state.u = next;
        Ok(())
    }

    /// Advances `n_steps`, tagging failures with the absolute step index.
    pub fn advance(&mut self, state: &mut TrajectoryState, n_steps: u64) -> Result<()> {
        for _ in 0..n_steps {
            let at = state.step;
            self.step(state).map_err(|e| Error::Step { step: at, source: Box::new(e) })?;
        }
        Ok(())
    }
}

/// One step of the scheme.
pub fn step(state: &TrajectoryState, nf: &NumericalFlux, dn: &DiscreteNoise, cfg: &StepperConfig) -> Result<TrajectoryState> {
    let mut next = state.clone();
    Stepper::new(nf, dn, *cfg)?.step(&mut next)?;
    Ok(next)
}

/// Per-step summary of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub step: u64,
    pub t: f64,
    pub energy: f64,
    pub h1_seminorm: f64,
    pub phi: f64,
    pub linf: f64,
}

impl Diagnostics {
    pub fn of(state: &TrajectoryState, dt: f64) -> Self {
        let energy = state.u.l2_norm_sq();
        Diagnostics {
            step: state.step,
            t: state.time(dt),
            energy,
            h1_seminorm: state.u.h1_seminorm_sq().sqrt(),
            phi: (-energy).exp(),
            linf: state.u.linf_norm(),
        }
    }
}

/// Callback invoked at step 0 and at every positive multiple of `stride()`.
pub trait Observer {
    fn stride(&self) -> u64 {
        1
    }
    fn observe(&mut self, state: &TrajectoryState, dt: f64) -> Result<()>;
}

#[derive(Debug, Clone, Default)]
pub struct DiagnosticsRecorder {
    pub stride: u64,
    pub records: Vec<Diagnostics>,
}

impl DiagnosticsRecorder {
    pub fn new(stride: u64) -> Self {
        DiagnosticsRecorder {
            stride: stride.max(1),
            records: Vec::new(),
        }
    }
}

impl Observer for DiagnosticsRecorder {
    fn stride(&self) -> u64 {
        self.stride
    }
    fn observe(&mut self, state: &TrajectoryState, dt: f64) -> Result<()> {
        self.records.push(Diagnostics::of(state, dt));
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SnapshotRecorder {
    pub stride: u64,
    pub snapshots: Vec<(u64, GridVector)>,
}

impl SnapshotRecorder {
    pub fn new(stride: u64) -> Self {
        SnapshotRecorder {
            stride: stride.max(1),
            snapshots: Vec::new(),
        }
    }
}

impl Observer for SnapshotRecorder {
    fn stride(&self) -> u64 {
        self.stride
    }
    fn observe(&mut self, state: &TrajectoryState, _dt: f64) -> Result<()> {
        self.snapshots.push((state.step, state.u.clone()));
        Ok(())
    }
}

/// Adapts a closure into an [`Observer`].
pub struct FnObserver<F> {
    pub stride: u64,
    pub f: F,
}

impl<F: FnMut(&TrajectoryState, f64) -> Result<()>> Observer for FnObserver<F> {
    fn stride(&self) -> u64 {
        self.stride.max(1)
    }
    fn observe(&mut self, state: &TrajectoryState, dt: f64) -> Result<()> {
        (self.f)(state, dt)
    }
}

/// Runs `n_steps` from `u0`, notifying observers on their strides (step 0 included).
pub fn run_trajectory(
    u0: GridVector,
    rng: RngStream,
    n_steps: u64,
    nf: &NumericalFlux,
    dn: &DiscreteNoise,
    cfg: &StepperConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<TrajectoryState> {
    run_from(TrajectoryState::new(u0, rng), n_steps, nf, dn, cfg, observers)
}

/// As [`run_trajectory`], resuming from an existing state.
pub fn run_from(
    mut state: TrajectoryState,
    n_steps: u64,
    nf: &NumericalFlux,
    dn: &DiscreteNoise,
    cfg: &StepperConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<TrajectoryState> {
    if state.u.spec() != dn.spec() {
        return Err(Error::domain("initial state and noise live on different grids"));
    }
    let mut stepper = Stepper::new(nf, dn, *cfg)?;
    let start = state.step;
    let notify = |state: &TrajectoryState, observers: &mut [&mut dyn Observer]| -> Result<()> {
        let k = state.step - start;
        for obs in observers.iter_mut() {
            if k.is_multiple_of(obs.stride().max(1)) {
                obs.observe(state, cfg.dt)?;
            }
        }
        Ok(())
    };
    notify(&state, observers)?;
    for _ in 0..n_steps {
        stepper.advance(&mut state, 1)?;
        notify(&state, observers)?;
    }
    Ok(state)
}

/// Two trajectories driven by identical increments; returns `‖U_n - V_n‖_{ℓ¹}` for `n = 0..=n_steps`.
pub fn run_coupled_pair(
    u0: GridVector,
    v0: GridVector,
    n_steps: u64,
    nf: &NumericalFlux,
    dn: &DiscreteNoise,
    cfg: &StepperConfig,
    rng: RngStream,
) -> Result<Vec<f64>> {
    if u0.spec() != v0.spec() {
        return Err(Error::domain("coupled pair must share one grid"));
    }
    let mut a = Stepper::new(nf, dn, *cfg)?;
    let mut b = Stepper::new(nf, dn, *cfg)?;
    let mut su = TrajectoryState::new(u0, rng);
    let mut sv = TrajectoryState::new(v0, rng);
    let mut out = Vec::with_capacity(n_steps as usize + 1);
    out.push((&su.u - &sv.u).l1_norm());
    for _ in 0..n_steps {
        a.advance(&mut su, 1)?;
        b.advance(&mut sv, 1)?;
        out.push((&su.u - &sv.u).l1_norm());
    }
    Ok(out)
}

/// Runs `f` for replicas `0..count` in parallel and returns results in replica order.
///
/// The first failure in replica order is reported.
pub fn map_replicas<T, F>(count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..count).into_par_iter().map(&f).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(r, res)| res.map_err(|e| Error::Replica { replica: r as u64, source: Box::new(e) }))
        .collect()
}

/// One grid of a coupled-refinement experiment.
#[derive(Debug, Clone, Copy)]
pub struct RefinementLevel<'a> {
    pub noise: &'a DiscreteNoise,
    pub cfg: StepperConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementResult {
    pub mean: f64,
    pub std_error: f64,
    pub per_replica: Vec<f64>,
}

/// `‖Ψ_N U^N(T) - Ψ_{N_ref} U^{N_ref}(T)‖_{L²}` averaged over replicas, both grids
/// started at zero and driven by the same normals.
///
/// The fine time step must divide the coarse one; each coarse step consumes the
/// normals of its `k` fine substeps as `Σ ξ / √k`.
pub fn run_coupled_refinement(
    nf: &NumericalFlux,
    coarse: RefinementLevel<'_>,
    fine: RefinementLevel<'_>,
    t_final: f64,
    seed: u64,
    replicas: u64,
) -> Result<RefinementResult> {
    let nc = coarse.noise.spec().n_cells();
    let nfine = fine.noise.spec().n_cells();
    if nfine < nc || !nfine.is_multiple_of(nc) {
        return Err(Error::config("n_ref", format!("fine grid {nfine} is not a refinement of {nc}")));
    }
    if coarse.noise.n_modes() != fine.noise.n_modes() {
        return Err(Error::domain("coupled grids need the same noise modes"));
    }
    let ratio = coarse.cfg.dt / fine.cfg.dt;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
        return Err(Error::config("dt", format!("fine dt must divide coarse dt (ratio {ratio})")));
    }
    let k = k as u64;
    if replicas == 0 {
        return Err(Error::config("replicas", "must be at least 1"));
    }
    let n_coarse = coarse.cfg.steps_for(t_final);
    let n_modes = coarse.noise.n_modes();

    let per_replica = map_replicas(replicas, |r| {
        let rng = RngStream::new(seed, r);
        let mut sc = Stepper::new(nf, coarse.noise, coarse.cfg)?;
        let mut sf = Stepper::new(nf, fine.noise, fine.cfg)?;
        let mut uc = TrajectoryState::new(GridVector::zeros(coarse.noise.spec()), rng);
        let mut uf = TrajectoryState::new(GridVector::zeros(fine.noise.spec()), rng);
        let mut xi = vec![0.0; n_modes];
        let mut acc = vec![0.0; n_modes];
        for n in 0..n_coarse {
            acc.fill(0.0);
            for s in 0..k {
                let counter = n * k + s;
                rng.normals(counter, &mut xi);
                let at = uf.step;
                sf.step_with_normals(&mut uf, &xi)
                    .map_err(|e| Error::Step { step: at, source: Box::new(e) })?;
                acc.iter_mut().zip(&xi).for_each(|(a, x)| *a += x);
            }
            let scale = 1.0 / (k as f64).sqrt();
            acc.iter_mut().for_each(|a| *a *= scale);
            sc.step_with_normals(&mut uc, &acc)
                .map_err(|e| Error::Step { step: n, source: Box::new(e) })?;
        }
        let rc = reconstruct(&uc.u, 0)?;
        let rf = reconstruct(&uf.u, 0)?;
        Ok(rc.l2_distance_sq(&rf)?.max(0.0).sqrt())
    })?;
    let (mean, std_error) = crate::stats::mean_and_std_error(&per_replica);
    Ok(RefinementResult {
        mean,
        std_error,
        per_replica,
    })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SCLCKPT1";

/// Writes `magic, step, seed, replica` followed by the snapshot of `u`.
pub fn write_checkpoint<W: Write>(state: &TrajectoryState, mut out: W) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    for word in [state.step, state.rng.seed, state.rng.replica] {
        out.write_all(&word.to_le_bytes())?;
    }
    state.u.write_snapshot(out)
}

/// Restores a state written by [`write_checkpoint`]; `u_half` is set to `u`.
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<TrajectoryState> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::domain("not a checkpoint file"));
    }
    let mut words = [0u64; 3];
    for w in &mut words {
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        *w = u64::from_le_bytes(b);
    }
    let u = GridVector::read_snapshot(input)?;
    Ok(TrajectoryState {
        step: words[0],
        u_half: u.clone(),
        u,
        rng: RngStream::new(words[1], words[2]),
    })
}
