//! Finite-mode Q-Wiener forcing and counter-based Gaussian streams.

use std::sync::OnceLock;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Result;
use crate::grid::{d1_plus_of, project_sinusoid, GridSpec, GridVector, Sinusoid};

/// Forcing `W^Q(t) = Σ_k g^k β_k(t)` with a finite list of sinusoidal modes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub modes: Vec<Sinusoid>,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(modes: Vec<Sinusoid>, seed: u64) -> Self {
        NoiseModel { modes, seed }
    }

    /// The single mode `√2 sin(2π m x)`.
    pub fn single_sine(m: u32, seed: u64) -> Result<Self> {
        Ok(NoiseModel::new(vec![Sinusoid::unit_sine(m)?], seed))
    }

    pub fn stream(&self, replica: u64) -> RngStream {
        RngStream::new(self.seed, replica)
    }
}

/// Projected modes `g^k = Π_N g^k` on one grid, with the constants that bound them.
#[derive(Debug)]
pub struct DiscreteNoise {
    spec: GridSpec,
    modes: Vec<Sinusoid>,
    g_vecs: Vec<GridVector>,
    d_bound: f64,
    trace_l2: f64,
    max_pointwise_variance: f64,
    continuum_h2_trace: f64,
    q_matrix: OnceLock<Vec<f64>>,
}

impl Clone for DiscreteNoise {
    fn clone(&self) -> Self {
        DiscreteNoise {
            spec: self.spec,
            modes: self.modes.clone(),
            g_vecs: self.g_vecs.clone(),
            d_bound: self.d_bound,
            trace_l2: self.trace_l2,
            max_pointwise_variance: self.max_pointwise_variance,
            continuum_h2_trace: self.continuum_h2_trace,
            q_matrix: OnceLock::new(),
        }
    }
}

pub fn discretize(nm: &NoiseModel, spec: GridSpec) -> DiscreteNoise {
    let g_vecs: Vec<GridVector> = nm.modes.iter().map(|s| project_sinusoid(s, spec)).collect();
    let d_bound = g_vecs.iter().map(|g| d1_plus_of(spec, g.values()).l2_norm_sq()).sum();
    let trace_l2 = g_vecs.iter().map(GridVector::l2_norm_sq).sum();
    let max_pointwise_variance = (0..spec.n_cells())
        .map(|i| g_vecs.iter().map(|g| g.values()[i].powi(2)).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let continuum_h2_trace = nm.modes.iter().map(Sinusoid::h2_norm_sq).sum();
    DiscreteNoise {
        spec,
        modes: nm.modes.clone(),
        g_vecs,
        d_bound,
        trace_l2,
        max_pointwise_variance,
        continuum_h2_trace,
        q_matrix: OnceLock::new(),
    }
}

impl DiscreteNoise {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn modes(&self) -> &[Sinusoid] {
        &self.modes
    }

    pub fn g_vecs(&self) -> &[GridVector] {
        &self.g_vecs
    }

    pub fn n_modes(&self) -> usize {
        self.g_vecs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.g_vecs.is_empty()
    }

    /// `𝖣 = Σ_k ‖D⁺ g^k‖²`; dominates both `Σ_k ‖g^k‖²` and `max_i Σ_k (g^k_i)²`.
    pub fn d_bound(&self) -> f64 {
        self.d_bound
    }

    /// `Σ_k ‖g^k‖²`, the trace of `Q_N` in the normalised inner product.
    pub fn trace_l2(&self) -> f64 {
        self.trace_l2
    }

    pub fn max_pointwise_variance(&self) -> f64 {
        self.max_pointwise_variance
    }

    /// `Σ_k ‖∂_xx g^k‖²_{L²}` of the continuum modes.
    pub fn continuum_h2_trace(&self) -> f64 {
        self.continuum_h2_trace
    }

    /// Row-major `Q_N = Σ_k g^k (g^k)ᵀ`, built on first use.
    pub fn q_matrix(&self) -> &[f64] {
        self.q_matrix.get_or_init(|| {
            let n = self.spec.n_cells();
            let mut q = vec![0.0; n * n];
            for g in &self.g_vecs {
                let g = g.values();
                for i in 0..n {
                    for j in 0..n {
                        q[i * n + j] += g[i] * g[j];
                    }
                }
            }
            q
        })
    }

    #[cfg(test)]
    pub(crate) fn push_raw_mode_for_tests(&mut self, values: Vec<f64>) {
        self.g_vecs.push(GridVector::from_raw(self.spec, values));
        self.q_matrix = OnceLock::new();
    }

    /// `√dt Σ_k ξ_k g^k` written into `out`.
    pub fn increment_from_normals_into(&self, dt: f64, xi: &[f64], out: &mut [f64]) {
        debug_assert_eq!(xi.len(), self.g_vecs.len());
        out.fill(0.0);
        let sdt = dt.sqrt();
        for (g, &x) in self.g_vecs.iter().zip(xi) {
            let c = sdt * x;
            for (o, gi) in out.iter_mut().zip(g.values()) {
                *o += c * gi;
            }
        }
    }

    pub fn increment_from_normals(&self, dt: f64, xi: &[f64]) -> GridVector {
        let mut out = vec![0.0; self.spec.n_cells()];
        self.increment_from_normals_into(dt, xi, &mut out);
        GridVector::from_raw(self.spec, out)
    }
}

/// Increment `ΔW_step = √dt Σ_k ξ_k g^k` with `ξ` drawn from `stream` at counter `step`.
pub fn sample_increment(dn: &DiscreteNoise, dt: f64, stream: &RngStream, step: u64) -> GridVector {
    let mut xi = vec![0.0; dn.n_modes()];
    stream.normals(step, &mut xi);
    dn.increment_from_normals(dt, &xi)
}

/// Counter-based Gaussian source keyed by `(seed, replica)`.
///
/// The draws for step `n` depend only on `(seed, replica, n)`, so replicas
/// are independent of scheduling and two grids sharing a stream see the same
/// `ξ_k` at every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub replica: u64,
}

impl RngStream {
    pub fn new(seed: u64, replica: u64) -> Self {
        RngStream { seed, replica }
    }

    pub fn with_replica(self, replica: u64) -> Self {
        RngStream { replica, ..self }
    }

    fn generator(&self, step: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.replica.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(step);
        rng
    }

    /// Fills `out` with standard normals `ξ_0, ξ_1, …` for counter `step`.
    pub fn normals(&self, step: u64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        let mut rng = self.generator(step);
        for x in out.iter_mut() {
            *x = standard_normal_from_bits(rng.next_u64());
        }
    }

    /// Uniforms in `(0, 1)` for counter `step`; used for random initial data.
    pub fn uniforms(&self, step: u64, out: &mut [f64]) {
        let mut rng = self.generator(step);
        for x in out.iter_mut() {
            *x = open_uniform(rng.next_u64());
        }
    }
}

/// Maps 64 random bits to the midpoint of one of `2⁵²` equal subintervals of `(0, 1)`.
#[inline]
fn open_uniform(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[inline]
fn standard_normal_from_bits(bits: u64) -> f64 {
    Normal::standard().inverse_cdf(open_uniform(bits))
}
