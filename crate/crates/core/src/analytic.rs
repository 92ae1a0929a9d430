//! Closed-form Gaussian invariant measures of the linear (zero-flux) scheme.
//!
//! For the single forcing mode `g = √2 sin(2π m₀ x)` every measure involved is
//! a centred Gaussian supported on the line spanned by `g` (continuum) or by
//! `Π_N g` (discrete), so expectations of `Φ(v) = exp(-‖v‖²)` and Wasserstein
//! distances reduce to scalar formulas in the variances `κ`.
//!
//! [`lyapunov_covariance`] handles arbitrary finite mode lists on the grid by
//! working in the real Fourier eigenbasis of the periodic second difference.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{reconstruct, GridSpec, GridVector, Sinusoid};
use crate::linops::zero_mean_fourier_basis;
use crate::noise::DiscreteNoise;

/// `λ_N = 2N²(1 - cos(2π m₀ / N))`, the eigenvalue of `-D²` on mode `m₀`.
pub fn lambda_n(n_cells: usize, m0: u32) -> Result<f64> {
    if m0 == 0 {
        return Err(Error::domain("mode frequency must be at least 1"));
    }
    if n_cells <= 2 * m0 as usize {
        return Err(Error::Resolution { n_cells, m0 });
    }
    let nn = n_cells as f64;
    let s = (PI * m0 as f64 / nn).sin();
    Ok(4.0 * nn * nn * s * s)
}

/// Which stationary law `E[Φ]` refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretisation {
    /// Continuous in time on the grid.
    Semi,
    /// The split-step scheme at the case's `dt`.
    Split,
}

/// Linear case with single forcing mode `√2 sin(2π m₀ x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticCase {
    pub nu: f64,
    pub m0: u32,
    pub n_cells: usize,
    pub dt: Option<f64>,
}

impl AnalyticCase {
    pub fn new(nu: f64, m0: u32, n_cells: usize, dt: Option<f64>) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::config("nu", format!("viscosity must be positive, got {nu}")));
        }
        if let Some(dt) = dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config("dt", format!("time step must be positive, got {dt}")));
            }
        }
        lambda_n(n_cells, m0)?;
        Ok(AnalyticCase { nu, m0, n_cells, dt })
    }

    pub fn with_dt(self, dt: f64) -> Result<Self> {
        AnalyticCase::new(self.nu, self.m0, self.n_cells, Some(dt))
    }

    pub fn with_n_cells(self, n_cells: usize) -> Result<Self> {
        AnalyticCase::new(self.nu, self.m0, n_cells, self.dt)
    }

    fn require_dt(&self) -> Result<f64> {
        self.dt
            .ok_or_else(|| Error::config("dt", "a time step is required for split-step quantities"))
    }

    /// Continuum eigenvalue `λ = (2π m₀)²`.
    pub fn lambda(&self) -> f64 {
        (2.0 * PI * self.m0 as f64).powi(2)
    }

    pub fn lambda_n(&self) -> f64 {
        lambda_n(self.n_cells, self.m0).expect("validated at construction")
    }

    /// `‖Π_N g‖²_{ℓ²} = sinc²(π m₀ / N)`.
    pub fn g_norm_sq(&self) -> f64 {
        let z = PI * self.m0 as f64 / self.n_cells as f64;
        (z.sin() / z).powi(2)
    }

    /// `‖g‖²_{L²} / (2νλ)`.
    pub fn kappa(&self) -> f64 {
        1.0 / (2.0 * self.nu * self.lambda())
    }

    /// `κ_N = ‖Π_N g‖² / (2νλ_N)`.
    pub fn kappa_n(&self) -> f64 {
        self.g_norm_sq() / (2.0 * self.nu * self.lambda_n())
    }

    /// `Δt (1+x)² / ((1+x)² - 1) ‖Π_N g‖²` with `x = νΔtλ_N`.
    pub fn kappa_n_dt(&self) -> Result<f64> {
        Ok(self.split_variance_factor(self.require_dt()?) * self.g_norm_sq())
    }

    /// `Δt (1+x)² / ((1+x)² - 1)`, written as `Δt (1+x)² / (x (2+x))`.
    fn split_variance_factor(&self, dt: f64) -> f64 {
        let x = self.nu * dt * self.lambda_n();
        dt * (1.0 + x).powi(2) / (x * (2.0 + x))
    }

    /// `E[exp(-‖V‖²)] = 1/√(1 + 2κ)` for the chosen stationary law.
    pub fn stationary_phi(&self, which: Discretisation) -> Result<f64> {
        let kappa = match which {
            Discretisation::Semi => self.kappa_n(),
            Discretisation::Split => self.kappa_n_dt()?,
        };
        Ok(phi_of_variance(kappa))
    }

    /// `E[exp(-‖u‖²_{L²})]` under the continuum invariant measure.
    pub fn continuum_phi(&self) -> f64 {
        phi_of_variance(self.kappa())
    }

    /// `ε_N = sign ⟨g, Ψ_N Π_N g⟩`.
    pub fn eps_n(&self) -> f64 {
        let g = Sinusoid::unit_sine(self.m0).expect("m0 validated");
        let spec = GridSpec::new(self.n_cells).expect("validated");
        let r = reconstruct(&crate::grid::project_sinusoid(&g, spec), 0).expect("order 0");
        if r.inner_with_sinusoid(&g) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `W₂(μ_N, μ) = ‖g/√(2νλ) - ε_N Ψ_N Π_N g/√(2νλ_N)‖_{L²}`, integrated cell by cell.
    pub fn w2_space(&self) -> f64 {
        let spec = GridSpec::new(self.n_cells).expect("validated");
        let a = 1.0 / (2.0 * self.nu * self.lambda()).sqrt();
        let b = self.eps_n() / (2.0 * self.nu * self.lambda_n()).sqrt();
        let g = Sinusoid::unit_sine(self.m0).expect("m0 validated");
        let scaled = Sinusoid { amp: a * g.amp, ..g };
        let gv: GridVector = crate::grid::project_sinusoid(&g, spec).scaled(b);
        let r = reconstruct(&gv, 0).expect("order 0");
        r.l2_distance_sq_to_sinusoid(&scaled).max(0.0).sqrt()
    }

    /// Large-`N` limit of `N · W₂(μ_N, μ)`: `‖g‖_{H¹} / √(24νλ)`.
    pub fn w2_space_limit(&self) -> f64 {
        let g = Sinusoid::unit_sine(self.m0).expect("m0 validated");
        (g.h1_norm_sq() / (24.0 * self.nu * self.lambda())).sqrt()
    }

    /// `W₂(ϑ_{N,Δt}, ϑ_N) = |√(1/(2νλ_N)) - √(Δt(1+x)²/((1+x)²-1))| ‖Π_N g‖`.
    pub fn w2_time(&self) -> Result<f64> {
        let dt = self.require_dt()?;
        let semi = 1.0 / (2.0 * self.nu * self.lambda_n());
        let split = self.split_variance_factor(dt);
        Ok((semi.sqrt() - split.sqrt()).abs() * self.g_norm_sq().sqrt())
    }

    /// `|E_{ϑ_{N,Δt}}[Φ] - E_{ϑ_{N,Δt_ref}}[Φ]|`.
    pub fn weak_error(&self, dt_ref: f64) -> Result<f64> {
        let a = self.stationary_phi(Discretisation::Split)?;
        let b = self.with_dt(dt_ref)?.stationary_phi(Discretisation::Split)?;
        Ok((a - b).abs())
    }
}

/// `E[exp(-σ² Z²)] = 1/√(1 + 2σ²)` for a standard normal `Z`.
pub fn phi_of_variance(kappa: f64) -> f64 {
    1.0 / (1.0 + 2.0 * kappa).sqrt()
}

/// A centred Gaussian covariance on the grid, stored as an `N × N` matrix in
/// the canonical basis (`E[U_i U_j] = K_ij`).
#[derive(Debug, Clone)]
pub struct GaussianCovariance {
    pub spec: GridSpec,
    pub matrix: DMatrix<f64>,
}

impl GaussianCovariance {
    /// `E‖U‖²_{ℓ²} = tr(K) / N`.
    pub fn expected_l2_norm_sq(&self) -> f64 {
        self.matrix.trace() / self.spec.n_cells() as f64
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }
}

/// Stationary covariance of the linear scheme driven by `dn`.
///
/// With `dt = None` this solves `ν D² K + K ν D² + Q_N = 0`; with `Some(dt)` it
/// solves the split-step fixed point `K = R K R + Δt Q_N`, `R = (I - νΔt D²)⁻¹`.
/// Noise energy on the constant mode has no stationary law and is rejected.
pub fn lyapunov_covariance(dn: &DiscreteNoise, nu: f64, dt: Option<f64>) -> Result<GaussianCovariance> {
    if !(nu > 0.0) {
        return Err(Error::config("nu", "viscosity must be positive"));
    }
    let spec = dn.spec();
    let n = spec.n_cells();
    let q = DMatrix::from_row_slice(n, n, dn.q_matrix());

    let constant = DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt());
    let q_const = (constant.transpose() * &q * &constant)[(0, 0)];
    if q_const.abs() > 1e-12 * q.trace().max(1.0) {
        return Err(Error::IllPosed(format!(
            "noise carries energy {q_const:e} on the constant mode"
        )));
    }

    let basis = zero_mean_fourier_basis(spec);
    let b = DMatrix::from_fn(n, basis.len(), |i, a| basis[a].vector[i]);
    let lam: Vec<f64> = basis.iter().map(|m| -m.eigenvalue).collect();
    let q_spec = b.transpose() * &q * &b;
    let k_spec = DMatrix::from_fn(basis.len(), basis.len(), |a, c| match dt {
        None => q_spec[(a, c)] / (nu * (lam[a] + lam[c])),
        Some(dt) => {
            let ra = 1.0 / (1.0 + nu * dt * lam[a]);
            let rc = 1.0 / (1.0 + nu * dt * lam[c]);
            dt * q_spec[(a, c)] / (1.0 - ra * rc)
        }
    });
    let mut matrix = &b * k_spec * b.transpose();
    matrix = (&matrix + matrix.transpose()) * 0.5;
    Ok(GaussianCovariance { spec, matrix })
}

/// `W₂` between centred Gaussians with commuting covariances, in the normalised `ℓ²` norm.
///
/// Both matrices are diagonalised in the eigenbasis of a generic combination,
/// so `W₂² = Σ (√α_i - √β_i)²` without cancellation.
pub fn gaussian_w2_commuting(a: &GaussianCovariance, b: &GaussianCovariance) -> Result<f64> {
    if a.spec != b.spec {
        return Err(Error::domain("covariances live on different grids"));
    }
    let comm = &a.matrix * &b.matrix - &b.matrix * &a.matrix;
    let scale = a.matrix.norm() * b.matrix.norm();
    if comm.norm() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::IllPosed("covariances do not commute".into()));
    }
    const MIX: f64 = 1.618_033_988_749_895;
    let basis = SymmetricEigen::new(&a.matrix + &b.matrix * MIX).eigenvectors;
    let da = (basis.transpose() * &a.matrix * &basis).diagonal();
    let db = (basis.transpose() * &b.matrix * &basis).diagonal();
    let w2_sq: f64 = da
        .iter()
        .zip(db.iter())
        .map(|(x, y)| (x.max(0.0).sqrt() - y.max(0.0).sqrt()).powi(2))
        .sum();
    Ok((w2_sq / a.spec.n_cells() as f64).sqrt())
}
