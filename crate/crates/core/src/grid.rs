//! Discrete torus geometry and zero-mean grid vectors.
//!
//! Cells follow the right-closed convention: with `N` cells and 0-based
//! storage index `j`, value `j` lives on the cell `(j/N, (j+1)/N]`, whose
//! right interface is `x = (j+1)/N`. In textual output the 1-based label
//! `i = j + 1` is used so that `x_i = i/N` is the right interface of cell `i`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Tolerance on `|mean|`, relative to `max(1, ‖v‖_∞)`, accepted by [`GridVector::new`].
pub const MEAN_TOLERANCE: f64 = 1e-12;

/// Drift in the mean below this value is left alone by [`GridVector::recentre`].
pub const RECENTRE_THRESHOLD: f64 = 1e-14;

// 5-point Gauss–Legendre rule on [-1, 1].
const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

// 8-point Gauss–Legendre rule on [-1, 1], used for sinusoid moments on
// cells too narrow for the closed forms to be well conditioned.
const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// The regular mesh of the unit torus with `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n_cells: usize,
}

impl GridSpec {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::domain(format!("grid needs at least 2 cells, got {n_cells}")));
        }
        Ok(GridSpec { n_cells })
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    #[inline]
    pub fn cell_width(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    /// Right interface of the cell stored at 0-based index `j`.
    #[inline]
    pub fn right_interface(&self, j: usize) -> f64 {
        (j + 1) as f64 / self.n_cells as f64
    }

    /// Left interface of the cell stored at 0-based index `j`.
    #[inline]
    pub fn left_interface(&self, j: usize) -> f64 {
        j as f64 / self.n_cells as f64
    }

    /// Index of the right-closed cell containing `x` (taken modulo 1).
    pub fn cell_of(&self, x: f64) -> usize {
        let n = self.n_cells;
        let mut y = x.rem_euclid(1.0);
        if y == 0.0 {
            y = 1.0;
        }
        let j = (y * n as f64).ceil() as usize;
        j.clamp(1, n) - 1
    }
}

/// Sine or cosine component of a Fourier mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Sin,
    Cos,
}

/// `amp * sin(2π m x)` or `amp * cos(2π m x)` with `m ≥ 1`; always zero-mean on the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amp: f64,
    pub m: u32,
    pub phase: Phase,
}

impl Sinusoid {
    pub fn new(amp: f64, m: u32, phase: Phase) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("sinusoid frequency must be at least 1"));
        }
        if !amp.is_finite() {
            return Err(Error::InvalidFunction(format!("non-finite amplitude {amp}")));
        }
        Ok(Sinusoid { amp, m, phase })
    }

    /// `√2 sin(2π m x)`, the unit-norm mode used throughout the experiments.
    pub fn unit_sine(m: u32) -> Result<Self> {
        Sinusoid::new(std::f64::consts::SQRT_2, m, Phase::Sin)
    }

    #[inline]
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.m as f64
    }

    #[inline]
    fn phase_shift(&self) -> f64 {
        match self.phase {
            Phase::Sin => 0.0,
            Phase::Cos => 0.5 * PI,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.amp * (self.omega() * x + self.phase_shift()).sin()
    }

    /// Exact `∫_a^b f`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let w = self.omega();
        let half = 0.5 * w * (b - a);
        let mid = 0.5 * w * (a + b) + self.phase_shift();
        // sin(mid - half) antiderivative difference written as a product to
        // avoid cancellation on narrow cells.
        self.amp * 2.0 * mid.sin() * half.sin() / w
    }

    /// Exact `∫_a^b f²`.
    pub fn integral_sq(&self, a: f64, b: f64) -> f64 {
        let w = self.omega();
        let s = self.phase_shift();
        // sin²θ = (1 - cos 2θ)/2
        let c = ((2.0 * (w * b + s)).sin() - (2.0 * (w * a + s)).sin()) / (2.0 * w);
        self.amp * self.amp * 0.5 * ((b - a) - c)
    }

    /// `‖f‖²_{L²}` over the torus.
    pub fn l2_norm_sq(&self) -> f64 {
        0.5 * self.amp * self.amp
    }

    /// `‖∂_x f‖²_{L²}`.
    pub fn h1_norm_sq(&self) -> f64 {
        self.l2_norm_sq() * self.omega().powi(2)
    }

    /// `‖∂_xx f‖²_{L²}`.
    pub fn h2_norm_sq(&self) -> f64 {
        self.l2_norm_sq() * self.omega().powi(4)
    }

    /// `[∫_0^1 s^k f(x0 + h s) ds]_{k=0,1,2}`.
    fn moments(&self, x0: f64, h: f64) -> [f64; 3] {
        let b = self.omega() * h;
        let t0 = self.omega() * x0 + self.phase_shift();
        let mut out = [0.0; 3];
        if b.abs() < 0.5 {
            for (node, weight) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
                let s = 0.5 * (node + 1.0);
                let f = (t0 + b * s).sin();
                out[0] += 0.5 * weight * f;
                out[1] += 0.5 * weight * f * s;
                out[2] += 0.5 * weight * f * s * s;
            }
        } else {
            // Integration by parts on ∫ s^k sin(t0 + b s) and its cosine twin.
            let t1 = t0 + b;
            let c0 = (t1.sin() - t0.sin()) / b;
            let s0 = (t0.cos() - t1.cos()) / b;
            let s1 = -t1.cos() / b + c0 / b;
            let c1 = t1.sin() / b - s0 / b;
            let s2 = -t1.cos() / b + 2.0 * c1 / b;
            out = [s0, s1, s2];
        }
        out.map(|v| v * self.amp)
    }
}

/// Normalised inner product `(1/N) Σ v_i w_i`.
pub fn inner(v: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(v.len(), w.len());
    v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / v.len() as f64
}

/// Normalised `ℓ^p` norm of a raw slice; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm_slice(v: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::domain(format!("lp norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(v.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
    }
    let n = v.len() as f64;
    if p == 1.0 {
        return Ok(v.iter().map(|x| x.abs()).sum::<f64>() / n);
    }
    if p == 2.0 {
        return Ok((v.iter().map(|x| x * x).sum::<f64>() / n).sqrt());
    }
    Ok((v.iter().map(|x| x.abs().powf(p)).sum::<f64>() / n).powf(1.0 / p))
}

pub(crate) fn forward_difference_into(v: &[f64], out: &mut [f64]) {
    let n = v.len();
    let scale = n as f64;
    for i in 0..n {
        let next = if i + 1 == n { v[0] } else { v[i + 1] };
        out[i] = scale * (next - v[i]);
    }
}

pub(crate) fn backward_difference_into(v: &[f64], out: &mut [f64]) {
    let n = v.len();
    let scale = n as f64;
    for i in 0..n {
        let prev = if i == 0 { v[n - 1] } else { v[i - 1] };
        out[i] = scale * (v[i] - prev);
    }
}

pub(crate) fn second_difference_into(v: &[f64], out: &mut [f64]) {
    let n = v.len();
    let scale = (n * n) as f64;
    for i in 0..n {
        let prev = if i == 0 { v[n - 1] } else { v[i - 1] };
        let next = if i + 1 == n { v[0] } else { v[i + 1] };
        out[i] = scale * (next - 2.0 * v[i] + prev);
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// A real vector on the discrete torus with zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GridVector {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridVector {
    /// Validates length, finiteness and the zero-mean constraint.
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        Self::check_shape(spec, &values)?;
        let m = mean(&values);
        let scale = values.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
        if m.abs() > MEAN_TOLERANCE * scale {
            return Err(Error::domain(format!("grid vector has nonzero mean {m:e}")));
        }
        Ok(GridVector { spec, values })
    }

    /// Subtracts the mean from arbitrary finite values.
    pub fn from_centred(spec: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        Self::check_shape(spec, &values)?;
        let m = mean(&values);
        values.iter_mut().for_each(|x| *x -= m);
        Ok(GridVector { spec, values })
    }

    fn check_shape(spec: GridSpec, values: &[f64]) -> Result<()> {
        if values.len() != spec.n_cells() {
            return Err(Error::domain(format!(
                "expected {} values, got {}",
                spec.n_cells(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidFunction(format!("non-finite grid value {bad}")));
        }
        Ok(())
    }

    pub fn zeros(spec: GridSpec) -> Self {
        GridVector {
            spec,
            values: vec![0.0; spec.n_cells()],
        }
    }

    /// Internal constructor for values known to be zero-mean up to rounding.
    pub(crate) fn from_raw(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.n_cells());
        GridVector { spec, values }
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Removes accumulated drift in the mean once it exceeds [`RECENTRE_THRESHOLD`].
    pub fn recentre(&mut self) {
        let m = self.mean();
        if m.abs() > RECENTRE_THRESHOLD {
            self.values.iter_mut().for_each(|x| *x -= m);
        }
    }

    pub fn dot(&self, other: &GridVector) -> f64 {
        inner(&self.values, &other.values)
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm_slice(&self.values, p)
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|x| x.abs()).sum::<f64>() / self.len() as f64
    }

    pub fn l2_norm_sq(&self) -> f64 {
        inner(&self.values, &self.values)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `(D⁺v)_i = N (v_{i+1} - v_i)`.
    pub fn d1_plus(&self) -> GridVector {
        d1_plus_of(self.spec, &self.values)
    }

    /// `(D⁻v)_i = N (v_i - v_{i-1})`.
    pub fn d1_minus(&self) -> GridVector {
        let mut out = vec![0.0; self.len()];
        backward_difference_into(&self.values, &mut out);
        GridVector::from_raw(self.spec, out)
    }

    /// `D² = D⁻ D⁺`.
    pub fn d2(&self) -> GridVector {
        let mut out = vec![0.0; self.len()];
        second_difference_into(&self.values, &mut out);
        GridVector::from_raw(self.spec, out)
    }

    /// `‖D⁺v‖²_{ℓ²}`, the squared discrete h¹ seminorm.
    pub fn h1_seminorm_sq(&self) -> f64 {
        let n = self.len();
        let scale = (n * n) as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let next = if i + 1 == n { self.values[0] } else { self.values[i + 1] };
            let d = next - self.values[i];
            acc += d * d;
        }
        scale * acc / n as f64
    }

    pub fn scaled(&self, factor: f64) -> GridVector {
        GridVector::from_raw(self.spec, self.values.iter().map(|x| x * factor).collect())
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: f64, other: &GridVector) {
        debug_assert_eq!(self.spec, other.spec);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    /// CSV rows `i,x_i,v_i` with 17 significant digits, preceded by a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,x_i,v_i")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{:.16e},{:.16e}", j + 1, self.spec.right_interface(j), v)?;
        }
        Ok(())
    }

    /// Little-endian snapshot: `N` as `u64`, then `N` values as `f64`.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut input: R) -> Result<Self> {
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word);
        let n = usize::try_from(n).map_err(|_| Error::domain("snapshot length overflows usize"))?;
        let spec = GridSpec::new(n)?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut word)?;
            values.push(f64::from_le_bytes(word));
        }
        GridVector::new(spec, values)
    }
}

/// `D⁺` applied to an arbitrary (not necessarily zero-mean) vector; the result
/// always has zero sum.
pub fn d1_plus_of(spec: GridSpec, values: &[f64]) -> GridVector {
    let mut out = vec![0.0; values.len()];
    forward_difference_into(values, &mut out);
    GridVector::from_raw(spec, out)
}

impl Add for &GridVector {
    type Output = GridVector;
    fn add(self, rhs: &GridVector) -> GridVector {
        debug_assert_eq!(self.spec, rhs.spec);
        GridVector::from_raw(self.spec, self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &GridVector {
    type Output = GridVector;
    fn sub(self, rhs: &GridVector) -> GridVector {
        debug_assert_eq!(self.spec, rhs.spec);
        GridVector::from_raw(self.spec, self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect())
    }
}

impl Mul<f64> for &GridVector {
    type Output = GridVector;
    fn mul(self, rhs: f64) -> GridVector {
        self.scaled(rhs)
    }
}

impl Neg for &GridVector {
    type Output = GridVector;
    fn neg(self) -> GridVector {
        self.scaled(-1.0)
    }
}

/// `(Π_N f)_i = N ∫_{cell i} f`, by 5-point Gauss–Legendre on each cell, re-centred.
pub fn project<F: Fn(f64) -> f64>(f: F, spec: GridSpec) -> Result<GridVector> {
    let h = spec.cell_width();
    let values = (0..spec.n_cells())
        .map(|j| {
            let a = spec.left_interface(j);
            let mut acc = 0.0;
            for (node, weight) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
                acc += weight * f(a + 0.5 * h * (node + 1.0));
            }
            // N * (h/2) * Σ w f  = Σ w f / 2
            0.5 * acc
        })
        .collect::<Vec<_>>();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidFunction(format!("quadrature produced {bad}")));
    }
    GridVector::from_centred(spec, values)
}

/// Exact cell averages of a sinusoid.
pub fn project_sinusoid(s: &Sinusoid, spec: GridSpec) -> GridVector {
    let n = spec.n_cells() as f64;
    let values = (0..spec.n_cells())
        .map(|j| n * s.integral(spec.left_interface(j), spec.right_interface(j)))
        .collect();
    GridVector::from_centred(spec, values).expect("sinusoid cell averages are finite")
}

/// Polynomial degree of a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionOrder {
    PiecewiseConstant,
    PiecewiseLinear,
    PiecewiseQuadratic,
}

impl ReconstructionOrder {
    pub fn from_degree(order: u32) -> Result<Self> {
        match order {
            0 => Ok(Self::PiecewiseConstant),
            1 => Ok(Self::PiecewiseLinear),
            2 => Ok(Self::PiecewiseQuadratic),
            other => Err(Error::domain(format!("reconstruction order must be 0, 1 or 2, got {other}"))),
        }
    }
}

/// Piecewise polynomial function on the torus. On cell `j` it equals
/// `c0 + c1 s + c2 s²` with local coordinate `s = N x - j ∈ (0, 1]`.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    spec: GridSpec,
    order: ReconstructionOrder,
    coeffs: Vec<[f64; 3]>,
}

/// Builds `Ψ_N v` (order 0) or the continuous interpolants of order 1 and 2
/// taking the value `v_i` at the right interface of cell `i`.
///
/// The quadratic on a cell matches both interface values and has cell
/// average `v_i`.
pub fn reconstruct(v: &GridVector, order: u32) -> Result<Reconstruction> {
    let order = ReconstructionOrder::from_degree(order)?;
    let vals = v.values();
    let n = vals.len();
    let coeffs = (0..n)
        .map(|j| {
            let right = vals[j];
            let left = vals[(j + n - 1) % n];
            match order {
                ReconstructionOrder::PiecewiseConstant => [right, 0.0, 0.0],
                ReconstructionOrder::PiecewiseLinear => [left, right - left, 0.0],
                ReconstructionOrder::PiecewiseQuadratic => {
                    let jump = left - right;
                    [left, -4.0 * jump, 3.0 * jump]
                }
            }
        })
        .collect();
    Ok(Reconstruction {
        spec: v.spec(),
        order,
        coeffs,
    })
}

impl Reconstruction {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn order(&self) -> ReconstructionOrder {
        self.order
    }

    pub fn cell_coefficients(&self, j: usize) -> [f64; 3] {
        self.coeffs[j]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let j = self.spec.cell_of(x);
        let mut y = x.rem_euclid(1.0);
        if y == 0.0 {
            y = 1.0;
        }
        let s = (y * self.spec.n_cells() as f64 - j as f64).clamp(0.0, 1.0);
        let [c0, c1, c2] = self.coeffs[j];
        c0 + s * (c1 + s * c2)
    }

    /// Exact `∫_0^1 Ψ(x)² dx`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.spec.cell_width() * self.coeffs.iter().map(poly_sq_integral).sum::<f64>()
    }

    /// Exact `∫_0^1 (∂_x Ψ)² dx` (order 0 carries no derivative and returns 0).
    pub fn h1_seminorm_sq(&self) -> f64 {
        let n = self.spec.n_cells() as f64;
        // d/dx = N d/ds, dx = ds / N
        n * self
            .coeffs
            .iter()
            .map(|&[_, c1, c2]| c1 * c1 + 2.0 * c1 * c2 + 4.0 * c2 * c2 / 3.0)
            .sum::<f64>()
    }

    /// Exact `‖self - other‖²_{L²}` when one grid refines the other.
    pub fn l2_distance_sq(&self, other: &Reconstruction) -> Result<f64> {
        let (fine, coarse) = if self.spec.n_cells() >= other.spec.n_cells() {
            (self, other)
        } else {
            (other, self)
        };
        let nf = fine.spec.n_cells();
        let nc = coarse.spec.n_cells();
        if nf % nc != 0 {
            return Err(Error::domain(format!("grids {nf} and {nc} are not nested")));
        }
        let ratio = nf / nc;
        let h = fine.spec.cell_width();
        // 3-point Gauss–Legendre is exact for the degree-4 integrand.
        let nodes = [-(0.6_f64).sqrt(), 0.0, (0.6_f64).sqrt()];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mut total = 0.0;
        for j in 0..nf {
            let jc = j / ratio;
            let offset = (j % ratio) as f64;
            let [a0, a1, a2] = fine.coeffs[j];
            let [b0, b1, b2] = coarse.coeffs[jc];
            let mut acc = 0.0;
            for (node, weight) in nodes.iter().zip(weights) {
                let s = 0.5 * (node + 1.0);
                let sc = (offset + s) / ratio as f64;
                let d = (a0 + s * (a1 + s * a2)) - (b0 + sc * (b1 + sc * b2));
                acc += 0.5 * weight * d * d;
            }
            total += h * acc;
        }
        Ok(total)
    }

    /// Exact `∫_0^1 Ψ(x) f(x) dx` for a sinusoid `f`.
    pub fn inner_with_sinusoid(&self, f: &Sinusoid) -> f64 {
        let h = self.spec.cell_width();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let m = f.moments(self.spec.left_interface(j), h);
                h * (c[0] * m[0] + c[1] * m[1] + c[2] * m[2])
            })
            .sum()
    }

    /// Exact `‖Ψ - f‖²_{L²}` for a sinusoid `f`, summed cell by cell.
    pub fn l2_distance_sq_to_sinusoid(&self, f: &Sinusoid) -> f64 {
        let h = self.spec.cell_width();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let a = self.spec.left_interface(j);
                let m = f.moments(a, h);
                h * poly_sq_integral(c) - 2.0 * h * (c[0] * m[0] + c[1] * m[1] + c[2] * m[2])
                    + f.integral_sq(a, a + h)
            })
            .sum()
    }
}

/// `∫_0^1 (c0 + c1 s + c2 s²)² ds`.
fn poly_sq_integral(&[c0, c1, c2]: &[f64; 3]) -> f64 {
    c0 * c0 + c0 * c1 + (2.0 * c0 * c2 + c1 * c1) / 3.0 + c1 * c2 / 2.0 + c2 * c2 / 5.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn grid_spec_rejects_tiny_grids() {
        assert!(GridSpec::new(1).is_err());
        assert!(GridSpec::new(0).is_err());
        let s = spec(7);
        assert!((s.cell_width() * 7.0 - 1.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn cell_lookup_is_right_closed() {
        let s = spec(4);
        assert_eq!(s.cell_of(0.25), 0);
        assert_eq!(s.cell_of(0.2500001), 1);
        assert_eq!(s.cell_of(1.0), 3);
        assert_eq!(s.cell_of(0.0), 3);
        assert_eq!(s.cell_of(0.1), 0);
    }

    #[test]
    fn grid_vector_rejects_nonzero_mean_and_nan() {
        assert!(GridVector::new(spec(2), vec![1.0, 0.0]).is_err());
        assert!(GridVector::new(spec(2), vec![f64::NAN, 0.0]).is_err());
        assert!(GridVector::new(spec(3), vec![1.0, -1.0]).is_err());
        let v = GridVector::from_centred(spec(2), vec![3.0, 1.0]).unwrap();
        assert_eq!(v.values(), &[1.0, -1.0]);
    }

    #[test]
    fn project_zero_function() {
        let v = project(|_| 0.0, spec(4)).unwrap();
        assert_eq!(v.values(), &[0.0; 4]);
    }

    #[test]
    fn project_sine_matches_exact_cell_averages() {
        let g = Sinusoid::unit_sine(1).unwrap();
        let expected = 2.0 * std::f64::consts::SQRT_2 / PI;
        let exact = project_sinusoid(&g, spec(4));
        let quad = project(|x| g.eval(x), spec(4)).unwrap();
        for (i, sign) in [1.0, 1.0, -1.0, -1.0].iter().enumerate() {
            assert_relative_eq!(exact.values()[i], sign * expected, epsilon = 1e-15);
            assert_relative_eq!(quad.values()[i], sign * expected, epsilon = 1e-6);
        }
        assert_relative_eq!(expected, 0.9003163161571062, epsilon = 1e-15);
    }

    #[test]
    fn projected_sine_norm_at_32() {
        let g = Sinusoid::unit_sine(1).unwrap();
        let v = project_sinusoid(&g, spec(32));
        let x = PI / 32.0;
        assert_relative_eq!(v.l2_norm_sq(), (x.sin() / x).powi(2), epsilon = 1e-14);
        assert_relative_eq!(v.l2_norm_sq(), 0.99679, epsilon = 5e-6);
    }

    #[test]
    fn project_rejects_non_finite() {
        assert!(matches!(project(|x| 1.0 / (x - x), spec(4)), Err(Error::InvalidFunction(_))));
    }

    #[test]
    fn difference_operator_examples() {
        let z = GridVector::zeros(spec(5));
        assert_eq!(z.d2().values(), &[0.0; 5]);

        let alt = GridVector::new(spec(4), vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let d2 = alt.d2();
        for (a, b) in d2.values().iter().zip(alt.values()) {
            assert_eq!(*a, -64.0 * b);
        }

        let v = GridVector::new(spec(2), vec![1.0, -1.0]).unwrap();
        assert_eq!(v.d1_plus().values(), &[-4.0, 4.0]);
        assert_eq!(v.d1_minus().values(), &[4.0, -4.0]);
    }

    #[test]
    fn d2_is_composition_of_first_differences() {
        let v = GridVector::from_centred(spec(6), vec![0.3, -1.2, 2.0, 0.7, -0.1, 0.9]).unwrap();
        let a = v.d2();
        let b = v.d1_plus().d1_minus();
        let c = v.d1_minus().d1_plus();
        for i in 0..6 {
            assert_relative_eq!(a.values()[i], b.values()[i], epsilon = 1e-12);
            assert_relative_eq!(a.values()[i], c.values()[i], epsilon = 1e-12);
        }
        assert_relative_eq!(v.h1_seminorm_sq(), v.d1_plus().l2_norm_sq(), max_relative = 1e-14);
    }

    #[test]
    fn lp_norm_examples() {
        let z = GridVector::zeros(spec(3));
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert_eq!(z.lp_norm(p).unwrap(), 0.0);
        }
        let v = GridVector::new(spec(2), vec![1.0, -1.0]).unwrap();
        assert_eq!(v.lp_norm(2.0).unwrap(), 1.0);
        assert!(v.lp_norm(0.5).is_err());
        assert!(v.lp_norm(f64::NAN).is_err());
    }

    #[test]
    fn reconstruct_rejects_bad_order() {
        let v = GridVector::zeros(spec(3));
        assert!(reconstruct(&v, 3).is_err());
    }

    #[test]
    fn reconstructions_interpolate_interfaces() {
        let v = GridVector::from_centred(spec(5), vec![1.0, 2.0, -0.5, 0.25, 3.0]).unwrap();
        for order in [1, 2] {
            let r = reconstruct(&v, order).unwrap();
            for j in 0..5 {
                let x = spec(5).right_interface(j);
                assert_relative_eq!(r.eval(x), v.values()[j], epsilon = 1e-12);
            }
        }
        let r0 = reconstruct(&v, 0).unwrap();
        assert_eq!(r0.eval(0.1), v.values()[0]);
        assert_eq!(r0.eval(0.2), v.values()[0]);
        assert_eq!(r0.eval(0.0), v.values()[4]);
    }

    #[test]
    fn quadratic_reconstruction_preserves_cell_averages() {
        let v = GridVector::from_centred(spec(4), vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let r = reconstruct(&v, 2).unwrap();
        for j in 0..4 {
            let [c0, c1, c2] = r.cell_coefficients(j);
            assert_relative_eq!(c0 + c1 / 2.0 + c2 / 3.0, v.values()[j], epsilon = 1e-14);
        }
    }

    #[test]
    fn sinusoid_moments_agree_between_branches() {
        let f = Sinusoid::new(1.3, 3, Phase::Cos).unwrap();
        // b = 2π·3·h just above and below the branch point
        for h in [0.5 / f.omega() * 0.999, 0.5 / f.omega() * 1.001] {
            let m = f.moments(0.37, h);
            // brute-force midpoint rule
            let k = 200_000;
            let mut brute = [0.0; 3];
            for i in 0..k {
                let s = (i as f64 + 0.5) / k as f64;
                let y = f.eval(0.37 + h * s);
                brute[0] += y / k as f64;
                brute[1] += y * s / k as f64;
                brute[2] += y * s * s / k as f64;
            }
            for q in 0..3 {
                assert_relative_eq!(m[q], brute[q], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let v = GridVector::from_centred(spec(5), vec![0.1, 0.2, 0.3, -0.7, 1e-300]).unwrap();
        let mut buf = Vec::new();
        v.write_snapshot(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 5 * 8);
        assert_eq!(&buf[..8], &5u64.to_le_bytes());
        let back = GridVector::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn csv_has_seventeen_significant_digits() {
        let v = GridVector::new(spec(2), vec![1.0 / 3.0, -1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "i,x_i,v_i");
        assert_eq!(lines[1], "1,5.0000000000000000e-1,3.3333333333333331e-1");
        let parsed: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(parsed, -1.0 / 3.0);
    }
}
