//! Command drivers behind the `stochcl` binary.
//!
//! Every command resolves a [`Config`], runs, and writes one CSV whose header
//! echoes that configuration. With `--out` a gnuplot script is written next
//! to the CSV. Output is independent of `--threads` because replica results
//! are reduced in replica order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytic::{AnalyticCase, Discretisation};
use crate::checks::{all_checks, CheckOptions, TrajectoryScale};
use crate::config::{Command, Config, FluxSpec};
use crate::error::{Error, Result};
use crate::estimator::{ergodic_estimate, phi, running_average, weak_error_from_reference, ErgodicPlan, ErgodicSetup};
use crate::flux::SignConvention;
use crate::stats::loglog_slope;
use crate::stepper::{
    read_checkpoint, run_coupled_refinement, run_from, write_checkpoint, DiagnosticsRecorder, RefinementLevel,
    TrajectoryState,
};
use crate::noise::RngStream;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_ACCEPTANCE: u8 = 4;

/// Offset separating the reference chains of `weak-error` from the others.
const REFERENCE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Parser)]
#[command(name = "stochcl", version, about = "Invariant-measure experiments for stochastic viscous conservation laws")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for replica parallelism; default is all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override any configuration key with a TOML value, e.g. `--set n=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-final")]
    pub t_final: Option<f64>,
    /// Burgers flux strength.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Flux strengths compared by `ergodic` and `weak-error`.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<f64>,
    #[arg(long)]
    pub stride: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignMutation {
    /// `sign(0) = -1`; still nondecreasing, so contraction keeps holding.
    ZeroNegative,
    /// `-sign`; breaks monotonicity.
    Flipped,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// One trajectory: energy, h1 seminorm, Phi and sup norm per stride.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write the final state here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from a checkpoint; `t_final` stays absolute.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Running averages of Phi for each flux strength.
    Ergodic {
        #[command(flatten)]
        common: Common,
    },
    /// Weak error against a fine reference step, per flux strength and step.
    WeakError {
        #[command(flatten)]
        common: Common,
    },
    /// Spatial W2 distance and optional coupled-refinement strong error.
    SpaceRate {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form quantities of the linear case.
    Analytic {
        #[command(flatten)]
        common: Common,
    },
    /// Structural inequality suites.
    Selfcheck {
        #[command(flatten)]
        common: Common,
        /// Inject a corrupted sign convention into the contraction check.
        #[arg(long, num_args = 0..=1, default_missing_value = "flipped")]
        mutate_sign: Option<SignMutation>,
        /// Trajectory checks at acceptance scale.
        #[arg(long)]
        full: bool,
        /// Run only the named checks.
        #[arg(long)]
        only: Vec<String>,
    },
}

impl Sub {
    fn parts(&self) -> (Command, &Common) {
        match self {
            Sub::Simulate { common, .. } => (Command::Simulate, common),
            Sub::Ergodic { common } => (Command::Ergodic, common),
            Sub::WeakError { common } => (Command::WeakError, common),
            Sub::SpaceRate { common } => (Command::SpaceRate, common),
            Sub::Analytic { common } => (Command::Analytic, common),
            Sub::Selfcheck { common, .. } => (Command::Selfcheck, common),
        }
    }
}

/// Result of a command that completed without error.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub csv: String,
    pub plot: Option<String>,
    /// False when an acceptance-style check failed.
    pub passed: bool,
    /// Human-readable lines for stderr.
    pub summary: Vec<String>,
}

impl Report {
    fn new(csv: String) -> Self {
        Report {
            csv,
            plot: None,
            passed: true,
            summary: Vec::new(),
        }
    }

    fn with_plot(mut self, plot: String) -> Self {
        self.plot = Some(plot);
        self
    }
}

/// Defaults, then the config file, then explicit flags.
pub fn resolve_config(cmd: Command, common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_file(cmd, path)?,
        None => Config::defaults_for(cmd),
    };
    for a in &common.set {
        cfg.set(a)?;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.n {
        cfg.n = v;
    }
    if let Some(v) = common.nu {
        cfg.nu = v;
    }
    if let Some(v) = common.dt {
        cfg.dt = v;
    }
    if let Some(v) = common.t_final {
        cfg.t_final = v;
        if common.burn_in.is_none() && !common.set.iter().any(|s| s.trim_start().starts_with("burn_in")) {
            cfg.burn_in = None;
        }
    }
    if let Some(v) = common.alpha {
        cfg.flux = FluxSpec::Burgers { alpha: Some(v) };
    }
    if let Some(v) = &common.alphas {
        cfg.alphas = Some(v.clone());
    }
    if let Some(v) = common.replicas {
        cfg.replicas = v;
    }
    if let Some(v) = common.burn_in {
        cfg.burn_in = Some(v);
    }
    if let Some(v) = common.stride {
        cfg.stride = v;
    }
    cfg.resolved().validated()
}

/// Parses, runs and writes outputs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(report) => {
            for line in &report.summary {
                eprintln!("{line}");
            }
            if report.passed {
                EXIT_OK
            } else {
                EXIT_ACCEPTANCE
            }
        }
        Err(e) => {
            eprintln!("stochcl: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn exit_code_for(e: &Error) -> u8 {
    if e.is_config() || matches!(e, Error::Io(_)) {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

/// Runs a subcommand inside a pool of `--threads` workers and writes its outputs.
pub fn execute(sub: &Sub) -> Result<Report> {
    let (cmd, common) = sub.parts();
    let cfg = resolve_config(cmd, common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    let report = pool.install(|| match sub {
        Sub::Simulate { checkpoint, resume, .. } => cmd_simulate(&cfg, resume.as_deref(), checkpoint.as_deref()),
        Sub::Ergodic { .. } => cmd_ergodic(&cfg),
        Sub::WeakError { .. } => cmd_weak_error(&cfg),
        Sub::SpaceRate { .. } => cmd_space_rate(&cfg),
        Sub::Analytic { .. } => cmd_analytic(&cfg),
        Sub::Selfcheck {
            mutate_sign, full, only, ..
        } => cmd_selfcheck(&cfg, *mutate_sign, *full, only),
    })?;
    write_outputs(&report, common.out.as_deref())?;
    Ok(report)
}

fn write_outputs(report: &Report, out: Option<&Path>) -> Result<()> {
    match out {
        None => print!("{}", report.csv),
        Some(path) => {
            std::fs::write(path, &report.csv)?;
            if let Some(plot) = &report.plot {
                let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                std::fs::write(path.with_extension("gp"), plot.replace("@CSV@", &name))?;
            }
        }
    }
    Ok(())
}

fn gnuplot_preamble(title: &str) -> String {
    format!(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\nset title '{title}'\nset grid\n"
    )
}

/// `t,energy,h1_seminorm,phi,linf` every `stride` steps after the start.
pub fn cmd_simulate(cfg: &Config, resume: Option<&Path>, checkpoint: Option<&Path>) -> Result<Report> {
    let spec = cfg.spec()?;
    let nf = cfg.numerical_flux()?;
    let dn = cfg.discrete_noise(spec)?;
    let scfg = cfg.stepper()?;
    let state = match resume {
        Some(p) => {
            let file = std::fs::File::open(p).map_err(|e| Error::config("resume", format!("{}: {e}", p.display())))?;
            let s = read_checkpoint(std::io::BufReader::new(file))?;
            if s.u.spec() != spec {
                return Err(Error::config("resume", "checkpoint grid differs from `n`"));
            }
            s
        }
        None => TrajectoryState::new(cfg.initial_condition(spec)?, RngStream::new(cfg.seed, 0)),
    };
    let total = scfg.steps_for(cfg.t_final);
    let n_steps = total.saturating_sub(state.step);
    let start = state.step;
    let mut rec = DiagnosticsRecorder::new(cfg.stride);
    let last = run_from(state, n_steps, &nf, &dn, &scfg, &mut [&mut rec])?;
    if let Some(p) = checkpoint {
        let file = std::fs::File::create(p)?;
        write_checkpoint(&last, std::io::BufWriter::new(file))?;
    }
    let mut csv = cfg.header(Command::Simulate);
    csv.push_str("t,energy,h1_seminorm,phi,linf\n");
    for d in rec.records.iter().filter(|d| d.step > start) {
        let _ = writeln!(csv, "{},{},{},{},{}", d.t, d.energy, d.h1_seminorm, d.phi, d.linf);
    }
    let plot = gnuplot_preamble("trajectory diagnostics")
        + "set xlabel 't'\nplot '@CSV@' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines, '' using 1:5 with lines\n";
    Ok(Report::new(csv).with_plot(plot))
}

/// Split-step stationary value of `Φ` when the oracle covers the configuration.
fn analytic_phi(cfg: &Config, alpha: f64, dt: f64) -> Result<Option<f64>> {
    match cfg.oracle_mode() {
        Some(m0) if alpha == 0.0 => Ok(Some(
            AnalyticCase::new(cfg.nu, m0, cfg.n, Some(dt))?.stationary_phi(Discretisation::Split)?,
        )),
        _ => Ok(None),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn alpha_label(a: f64) -> String {
    format!("alpha_{a}")
}

/// Running `Φ` averages from `t = 0`, one column per flux strength.
pub fn cmd_ergodic(cfg: &Config) -> Result<Report> {
    let spec = cfg.spec()?;
    let dn = cfg.discrete_noise(spec)?;
    let scfg = cfg.stepper()?;
    let u0 = cfg.initial_condition(spec)?;
    let alphas = cfg.alphas();
    let n_steps = scfg.steps_for(cfg.t_final);
    let fluxes = alphas.iter().map(|&a| Config::burgers_flux(a)).collect::<Result<Vec<_>>>()?;
    let columns = crate::stepper::map_replicas(alphas.len() as u64, |k| {
        let setup = ErgodicSetup {
            nf: &fluxes[k as usize],
            noise: &dn,
            cfg: scfg,
            u0: &u0,
            seed: cfg.seed,
        };
        running_average(&setup, n_steps, cfg.stride, 0, &phi)
    })?;
    let exact = analytic_phi(cfg, 0.0, cfg.dt)?;
    let mut csv = cfg.header(Command::Ergodic);
    csv.push('t');
    for &a in &alphas {
        csv.push(',');
        csv.push_str(&alpha_label(a));
    }
    csv.push_str(",analytic\n");
    let rows = columns.first().map_or(0, Vec::len);
    for r in 0..rows {
        let _ = write!(csv, "{}", columns[0][r].0);
        for col in &columns {
            let _ = write!(csv, ",{}", col[r].1);
        }
        let _ = writeln!(csv, ",{}", fmt_opt(exact));
    }
    let mut summary = Vec::new();
    if cfg.replicas >= 2 {
        let plan = plan_for(cfg)?;
        for (a, nf) in alphas.iter().zip(&fluxes) {
            let setup = ErgodicSetup {
                nf,
                noise: &dn,
                cfg: scfg,
                u0: &u0,
                seed: cfg.seed,
            };
            let est = ergodic_estimate(&setup, &plan, &phi)?;
            let line = format!(
                "estimate alpha={a} mean={} std_error={} ci=[{}, {}]",
                est.mean, est.std_error, est.ci_low, est.ci_high
            );
            let _ = writeln!(csv, "# {line}");
            summary.push(line);
        }
    }
    let mut plot = gnuplot_preamble("running average of Phi") + "set xlabel 't'\nplot ";
    let cols: Vec<String> = (2..=alphas.len() + 2)
        .map(|c| format!("'@CSV@' using 1:{c} with lines"))
        .collect();
    plot.push_str(&cols.join(", "));
    plot.push('\n');
    Ok(Report {
        summary,
        ..Report::new(csv).with_plot(plot)
    })
}

fn plan_for(cfg: &Config) -> Result<ErgodicPlan> {
    let burn = cfg.burn_in.unwrap_or(crate::estimator::DEFAULT_BURN_IN_FRACTION * cfg.t_final);
    ErgodicPlan {
        z: cfg.z,
        ..ErgodicPlan::new(cfg.t_final, cfg.replicas)?
    }
    .with_burn_in(burn)
}

/// Weak errors `|I(Δt) - I(Δt_ref)|` for each flux strength and step in `dt_grid`.
pub fn cmd_weak_error(cfg: &Config) -> Result<Report> {
    let spec = cfg.spec()?;
    let dn = cfg.discrete_noise(spec)?;
    let scfg = cfg.stepper()?;
    let u0 = cfg.initial_condition(spec)?;
    let plan = plan_for(cfg)?;
    let mut csv = cfg.header(Command::WeakError);
    csv.push_str("alpha,dt,mean,std_error,ci_low,ci_high,analytic_value\n");
    let mut slopes = Vec::new();
    for a in cfg.alphas() {
        let nf = Config::burgers_flux(a)?;
        let reference = ErgodicSetup {
            nf: &nf,
            noise: &dn,
            cfg: scfg.with_dt(cfg.dt_ref)?,
            u0: &u0,
            seed: cfg.seed.wrapping_add(REFERENCE_SEED_OFFSET),
        };
        let at_ref = ergodic_estimate(&reference, &plan, &phi)?;
        let (mut xs, mut mc, mut ex) = (Vec::new(), Vec::new(), Vec::new());
        for &dt in &cfg.dt_grid {
            let setup = ErgodicSetup {
                cfg: scfg.with_dt(dt)?,
                seed: cfg.seed,
                ..reference
            };
            let w = weak_error_from_reference(&setup, at_ref.clone(), cfg.dt_ref, &plan)?;
            let exact = match cfg.oracle_mode() {
                Some(m0) if a == 0.0 => Some(AnalyticCase::new(cfg.nu, m0, cfg.n, Some(dt))?.weak_error(cfg.dt_ref)?),
                _ => None,
            };
            let e = &w.estimate;
            let _ = writeln!(
                csv,
                "{a},{dt},{},{},{},{},{}",
                e.mean,
                e.std_error,
                e.ci_low,
                e.ci_high,
                fmt_opt(exact)
            );
            xs.push(dt);
            mc.push(e.mean);
            ex.extend(exact);
        }
        let mc_slope = loglog_slope(&xs, &mc).unwrap_or(f64::NAN);
        let ex_slope = if ex.len() == xs.len() { loglog_slope(&xs, &ex).ok() } else { None };
        slopes.push(format!("slope alpha={a} mc={mc_slope} analytic={}", fmt_opt(ex_slope)));
    }
    for s in &slopes {
        let _ = writeln!(csv, "# {s}");
    }
    let plot = gnuplot_preamble("weak error")
        + "set logscale xy\nset xlabel 'dt'\nplot '@CSV@' using 2:3:5:6 with yerrorbars title 'Monte Carlo', '' using 2:7 with linespoints title 'analytic'\n";
    Ok(Report {
        summary: slopes,
        ..Report::new(csv).with_plot(plot)
    })
}

/// `W₂(μ_N, μ)` per grid, its scaled value and limit, plus the optional strong error.
pub fn cmd_space_rate(cfg: &Config) -> Result<Report> {
    let m0 = cfg
        .oracle_mode()
        .ok_or_else(|| Error::config("noise", "space-rate needs a single forcing mode of amplitude sqrt(2)"))?;
    let mut csv = cfg.header(Command::SpaceRate);
    csv.push_str("n,w2_space,n_w2_space,limit,strong_error,strong_std_error\n");
    let (mut ns, mut w2s, mut strong) = (Vec::new(), Vec::new(), Vec::new());
    let nf = cfg.numerical_flux()?;
    let scfg = cfg.stepper()?;
    for &n in &cfg.n_grid {
        let case = AnalyticCase::new(cfg.nu, m0, n, None)?;
        let w2 = case.w2_space();
        let mc = if cfg.mc_replicas > 0 {
            let coarse = cfg.discrete_noise(crate::grid::GridSpec::new(n)?)?;
            let fine = cfg.discrete_noise(crate::grid::GridSpec::new(n * cfg.refine_ratio)?)?;
            Some(run_coupled_refinement(
                &nf,
                RefinementLevel { noise: &coarse, cfg: scfg },
                RefinementLevel { noise: &fine, cfg: scfg },
                cfg.t_final,
                cfg.seed,
                cfg.mc_replicas,
            )?)
        } else {
            None
        };
        let _ = writeln!(
            csv,
            "{n},{w2},{},{},{},{}",
            n as f64 * w2,
            case.w2_space_limit(),
            fmt_opt(mc.as_ref().map(|r| r.mean)),
            fmt_opt(mc.as_ref().map(|r| r.std_error))
        );
        ns.push(n as f64);
        w2s.push(w2);
        strong.extend(mc.map(|r| r.mean));
    }
    let mut summary = vec![format!("slope w2_space={}", loglog_slope(&ns, &w2s).unwrap_or(f64::NAN))];
    if strong.len() == ns.len() {
        summary.push(format!("slope strong_error={}", loglog_slope(&ns, &strong).unwrap_or(f64::NAN)));
    }
    for s in &summary {
        let _ = writeln!(csv, "# {s}");
    }
    let plot = gnuplot_preamble("spatial rate")
        + "set logscale xy\nset xlabel 'N'\nplot '@CSV@' using 1:2 with linespoints, '' using 1:5 with linespoints\n";
    Ok(Report {
        summary,
        ..Report::new(csv).with_plot(plot)
    })
}

/// Closed-form quantities of the linear single-mode case as `quantity,value`.
pub fn cmd_analytic(cfg: &Config) -> Result<Report> {
    let m0 = cfg
        .oracle_mode()
        .ok_or_else(|| Error::config("noise", "the oracle needs a single forcing mode of amplitude sqrt(2)"))?;
    let case = AnalyticCase::new(cfg.nu, m0, cfg.n, Some(cfg.dt))?;
    let dn = cfg.discrete_noise(cfg.spec()?)?;
    let weak: Vec<f64> = cfg
        .dt_grid
        .iter()
        .map(|&dt| case.with_dt(dt)?.weak_error(cfg.dt_ref))
        .collect::<Result<_>>()?;
    let rows: Vec<(&str, f64)> = vec![
        ("nu", cfg.nu),
        ("m0", m0 as f64),
        ("n", cfg.n as f64),
        ("dt", cfg.dt),
        ("lambda", case.lambda()),
        ("lambda_n", case.lambda_n()),
        ("g_norm_sq", case.g_norm_sq()),
        ("noise_constant_d", dn.d_bound()),
        ("kappa", case.kappa()),
        ("kappa_n", case.kappa_n()),
        ("kappa_n_dt", case.kappa_n_dt()?),
        ("phi_continuum", case.continuum_phi()),
        ("phi_semi", case.stationary_phi(Discretisation::Semi)?),
        ("phi_split", case.stationary_phi(Discretisation::Split)?),
        ("eps_n", case.eps_n()),
        ("w2_space", case.w2_space()),
        ("n_w2_space", cfg.n as f64 * case.w2_space()),
        ("w2_space_limit", case.w2_space_limit()),
        ("w2_time", case.w2_time()?),
        ("dt_ref", cfg.dt_ref),
        ("weak_error_dt_ref", case.weak_error(cfg.dt_ref)?),
        ("weak_error_slope", loglog_slope(&cfg.dt_grid, &weak).unwrap_or(f64::NAN)),
    ];
    let mut csv = cfg.header(Command::Analytic);
    csv.push_str("quantity,value\n");
    for (k, v) in rows {
        let _ = writeln!(csv, "{k},{v}");
    }
    Ok(Report::new(csv))
}

/// Runs the check suites; `passed` is false if any check reports a violation.
pub fn cmd_selfcheck(cfg: &Config, mutation: Option<SignMutation>, full: bool, only: &[String]) -> Result<Report> {
    let sign = match mutation {
        None => SignConvention::ZeroPositive,
        Some(SignMutation::ZeroNegative) => SignConvention::ZeroNegative,
        Some(SignMutation::Flipped) => SignConvention::Flipped,
    };
    let opts = CheckOptions {
        instances: cfg.instances,
        seed: cfg.seed,
        sign,
        scale: if full { TrajectoryScale::FULL } else { TrajectoryScale::REDUCED },
    };
    let checks = all_checks();
    for name in only {
        if !checks.iter().any(|c| c.name == name) {
            return Err(Error::config("only", format!("unknown check `{name}`")));
        }
    }
    let mut csv = cfg.header(Command::Selfcheck);
    csv.push_str("check,status,instances,violations,worst\n");
    let mut summary = vec![format!("{:<24} {:<6} {:>9} {:>10}  {}", "check", "status", "instances", "violations", "detail")];
    let mut passed = true;
    for c in checks.iter().filter(|c| only.is_empty() || only.iter().any(|o| o == c.name)) {
        let out = c.run(&opts)?;
        let status = if out.passed() { "pass" } else { "FAIL" };
        passed &= out.passed();
        let _ = writeln!(csv, "{},{status},{},{},{:e}", out.name, out.instances, out.violations, out.worst);
        summary.push(format!(
            "{:<24} {:<6} {:>9} {:>10}  {}",
            out.name, status, out.instances, out.violations, out.detail
        ));
    }
    Ok(Report {
        csv,
        plot: None,
        passed,
        summary,
    })
}
