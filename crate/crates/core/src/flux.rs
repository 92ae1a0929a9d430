//! Flux functions, the Engquist–Osher numerical flux and the finite-volume drift
//! `b(v) = -D⁻ Ā(v) + ν D² v`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::GridVector;
use crate::linops::CyclicTridiag;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tolerance of the adaptive Simpson rule used for fluxes without a closed form.
pub const EO_QUADRATURE_TOL: f64 = 1e-10;

#[derive(Clone)]
enum FluxKind {
    /// `A(v) = α v² / 2`
    Burgers { alpha: f64 },
    /// `A(v) = Σ_k c_k v^k` with the real roots of `A'` sorted ascending.
    Polynomial { coeffs: Vec<f64>, derivative_roots: Vec<f64> },
    /// Arbitrary `A` and `A'` given as closures.
    Custom { a: ScalarFn, a_prime: ScalarFn },
}

/// A flux function `A` with its derivative and growth exponent `p_A`.
#[derive(Clone)]
pub struct FluxModel {
    kind: FluxKind,
    growth_exponent: u32,
    label: String,
}

impl fmt::Debug for FluxModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluxModel")
            .field("label", &self.label)
            .field("growth_exponent", &self.growth_exponent)
            .finish()
    }
}

/// The Burgers family `A(v) = α v²/2`.
pub fn burgers(alpha: f64) -> Result<FluxModel> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::domain(format!("Burgers strength must be finite and >= 0, got {alpha}")));
    }
    Ok(FluxModel {
        kind: FluxKind::Burgers { alpha },
        growth_exponent: 1,
        label: format!("burgers(alpha={alpha})"),
    })
}

impl FluxModel {
    /// Polynomial flux `A(v) = Σ coeffs[k] v^k`.
    ///
    /// `derivative_roots` must list every real root of `A'`; they are where the
    /// Engquist–Osher integrals split. Roots are checked, not computed.
    pub fn polynomial(coeffs: Vec<f64>, mut derivative_roots: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("polynomial flux coefficients must be finite"));
        }
        let a0 = coeffs.first().copied().unwrap_or(0.0);
        if a0 != 0.0 {
            return Err(Error::Normalization(a0));
        }
        derivative_roots.sort_by(f64::total_cmp);
        let degree = coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        let model = FluxModel {
            kind: FluxKind::Polynomial {
                coeffs: coeffs.clone(),
                derivative_roots: derivative_roots.clone(),
            },
            growth_exponent: degree.saturating_sub(1).max(1) as u32,
            label: format!("polynomial({coeffs:?})"),
        };
        let scale = 1.0 + model.growth_constant();
        for &r in &derivative_roots {
            if model.a_prime(r).abs() > 1e-9 * scale * (1.0 + r.abs()).powi(degree as i32) {
                return Err(Error::domain(format!("{r} is not a root of A'")));
            }
        }
        // A sign change of A' between consecutive listed roots means one is missing.
        let mut samples: Vec<f64> = sample_grid(-10.0, 10.0, 4001).collect();
        samples.extend((1..=60).flat_map(|k| {
            let x = 10f64.powf(k as f64 / 10.0);
            [x, -x]
        }));
        let mut segment_sign = vec![0.0_f64; derivative_roots.len() + 1];
        for x in samples {
            if derivative_roots.iter().any(|&r| (x - r).abs() < 1e-9) {
                continue;
            }
            let seg = derivative_roots.partition_point(|&r| r < x);
            let d = model.a_prime(x);
            if d == 0.0 {
                continue;
            }
            if segment_sign[seg] != 0.0 && d.signum() != segment_sign[seg] {
                return Err(Error::domain(format!("A' changes sign near {x}; a derivative root is missing")));
            }
            segment_sign[seg] = d.signum();
        }
        Ok(model)
    }

    /// Flux given by closures; Engquist–Osher integrals use adaptive quadrature.
    pub fn custom<A, D>(label: impl Into<String>, a: A, a_prime: D, growth_exponent: u32) -> Result<Self>
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if growth_exponent == 0 {
            return Err(Error::domain("growth exponent must be a positive integer"));
        }
        Ok(FluxModel {
            kind: FluxKind::Custom {
                a: Arc::new(a),
                a_prime: Arc::new(a_prime),
            },
            growth_exponent,
            label: label.into(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn growth_exponent(&self) -> u32 {
        self.growth_exponent
    }

    /// Burgers strength, if this is a Burgers flux.
    pub fn burgers_alpha(&self) -> Option<f64> {
        match self.kind {
            FluxKind::Burgers { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// True when `A ≡ 0`, i.e. the linear (stochastic heat) case.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            FluxKind::Burgers { alpha } => *alpha == 0.0,
            FluxKind::Polynomial { coeffs, .. } => coeffs.iter().all(|&c| c == 0.0),
            FluxKind::Custom { .. } => false,
        }
    }

    pub fn a(&self, v: f64) -> f64 {
        match &self.kind {
            FluxKind::Burgers { alpha } => 0.5 * alpha * v * v,
            FluxKind::Polynomial { coeffs, .. } => coeffs.iter().rev().fold(0.0, |acc, c| acc * v + c),
            FluxKind::Custom { a, .. } => a(v),
        }
    }

    pub fn a_prime(&self, v: f64) -> f64 {
        match &self.kind {
            FluxKind::Burgers { alpha } => alpha * v,
            FluxKind::Polynomial { coeffs, .. } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * v + k as f64 * c),
            FluxKind::Custom { a_prime, .. } => a_prime(v),
        }
    }

    /// A constant `C_A` with `|A'(v)| ≤ C_A (1 + |v|^{p_A})`.
    ///
    /// Closed form for Burgers and polynomial fluxes; for custom fluxes the
    /// smallest constant valid on a sample of `[-10, 10]`.
    pub fn growth_constant(&self) -> f64 {
        match &self.kind {
            FluxKind::Burgers { alpha } => alpha.max(f64::MIN_POSITIVE),
            FluxKind::Polynomial { coeffs, .. } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c.abs())
                .sum::<f64>()
                .max(f64::MIN_POSITIVE),
            FluxKind::Custom { .. } => sample_grid(-10.0, 10.0, 2001)
                .map(|v| self.a_prime(v).abs() / (1.0 + v.abs().powi(self.growth_exponent as i32)))
                .fold(f64::MIN_POSITIVE, f64::max),
        }
    }

    /// Checks `|A'(v)| ≤ C_A (1 + |v|^{p_A})` on a sample of `[-10, 10]`.
    pub fn check_growth(&self) -> bool {
        let c = self.growth_constant() * (1.0 + 1e-12);
        sample_grid(-10.0, 10.0, 2001)
            .all(|v| self.a_prime(v).abs() <= c * (1.0 + v.abs().powi(self.growth_exponent as i32)))
    }
}

fn sample_grid(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    (0..count).map(move |k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
}

/// Sign convention for `sign(z)`. The standard convention is `sign(0) = +1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignConvention {
    #[default]
    ZeroPositive,
    ZeroNegative,
    /// Deliberately wrong: `-sign(z)`. Only used to exercise the self-check.
    Flipped,
}

impl SignConvention {
    #[inline]
    pub fn sign(self, z: f64) -> f64 {
        match self {
            SignConvention::ZeroPositive => {
                if z >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            SignConvention::ZeroNegative => {
                if z > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            SignConvention::Flipped => {
                if z >= 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// `sign(z) = 1_{z ≥ 0} - 1_{z < 0}`.
#[inline]
pub fn sign(z: f64) -> f64 {
    SignConvention::ZeroPositive.sign(z)
}

/// The Engquist–Osher numerical flux
/// `Ā(v, w) = ∫_0^v [A']₊ - ∫_0^w [A']₋` built from a [`FluxModel`].
#[derive(Debug, Clone)]
pub struct NumericalFlux {
    source: FluxModel,
}

/// Builds the Engquist–Osher flux; requires `A(0) = 0`.
pub fn engquist_osher(model: FluxModel) -> Result<NumericalFlux> {
    let a0 = model.a(0.0);
    if a0 != 0.0 {
        return Err(Error::Normalization(a0));
    }
    Ok(NumericalFlux { source: model })
}

impl NumericalFlux {
    pub fn source(&self) -> &FluxModel {
        &self.source
    }

    /// `Ā(v, w)`.
    pub fn abar(&self, v: f64, w: f64) -> f64 {
        match &self.source.kind {
            FluxKind::Burgers { alpha } => {
                let p = v.max(0.0);
                let m = w.min(0.0);
                0.5 * alpha * (p * p + m * m)
            }
            _ => self.positive_integral(v) - self.negative_integral(w),
        }
    }

    /// `∂₁Ā(v, w) = [A'(v)]₊`.
    #[inline]
    pub fn d1_abar(&self, v: f64, _w: f64) -> f64 {
        self.source.a_prime(v).max(0.0)
    }

    /// `∂₂Ā(v, w) = -[A'(w)]₋`.
    #[inline]
    pub fn d2_abar(&self, _v: f64, w: f64) -> f64 {
        self.source.a_prime(w).min(0.0)
    }

    /// Constant and exponent of the polynomial growth bound on the partials;
    /// for Engquist–Osher both are inherited from `A`.
    pub fn growth_bound(&self) -> (f64, u32) {
        (self.source.growth_constant(), self.source.growth_exponent())
    }

    /// `∫_0^v [A']₊`
    fn positive_integral(&self, v: f64) -> f64 {
        let (lo, hi, orient) = if v >= 0.0 { (0.0, v, 1.0) } else { (v, 0.0, -1.0) };
        orient * self.signed_part_integral(lo, hi, true)
    }

    /// `∫_0^w [A']₋`
    fn negative_integral(&self, w: f64) -> f64 {
        let (lo, hi, orient) = if w >= 0.0 { (0.0, w, 1.0) } else { (w, 0.0, -1.0) };
        orient * self.signed_part_integral(lo, hi, false)
    }

    /// `∫_lo^hi [A']₊` (or `[A']₋`) for `lo ≤ hi`.
    fn signed_part_integral(&self, lo: f64, hi: f64, positive: bool) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let model = &self.source;
        match &model.kind {
            FluxKind::Polynomial { derivative_roots, .. } => {
                let mut breaks = vec![lo];
                breaks.extend(derivative_roots.iter().copied().filter(|&r| r > lo && r < hi));
                breaks.push(hi);
                breaks
                    .windows(2)
                    .map(|seg| {
                        let (a, b) = (seg[0], seg[1]);
                        let slope = model.a_prime(0.5 * (a + b));
                        let delta = model.a(b) - model.a(a);
                        match (positive, slope > 0.0) {
                            (true, true) => delta,
                            (false, false) => -delta,
                            _ => 0.0,
                        }
                    })
                    .sum()
            }
            _ => {
                let f = |x: f64| {
                    let d = model.a_prime(x);
                    if positive {
                        d.max(0.0)
                    } else {
                        (-d).max(0.0)
                    }
                };
                adaptive_simpson(&f, lo, hi, EO_QUADRATURE_TOL)
            }
        }
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// The vector `(Ā(v_i, v_{i+1}))_i` of interface fluxes.
pub fn interface_fluxes(v: &[f64], nf: &NumericalFlux, out: &mut [f64]) {
    let n = v.len();
    for i in 0..n {
        let next = if i + 1 == n { v[0] } else { v[i + 1] };
        out[i] = nf.abar(v[i], next);
    }
}

/// Raw-slice drift used by the Newton loop; `flux_buf` is scratch of length N.
pub(crate) fn drift_into(v: &[f64], nf: &NumericalFlux, nu: f64, flux_buf: &mut [f64], out: &mut [f64]) {
    let n = v.len();
    let nn = n as f64;
    let visc = nu * nn * nn;
    let linear = nf.source().is_zero();
    if !linear {
        interface_fluxes(v, nf, flux_buf);
    }
    for i in 0..n {
        let prev = if i == 0 { n - 1 } else { i - 1 };
        let next = if i + 1 == n { 0 } else { i + 1 };
        let mut b = visc * (v[next] - 2.0 * v[i] + v[prev]);
        if !linear {
            b -= nn * (flux_buf[i] - flux_buf[prev]);
        }
        out[i] = b;
    }
}

/// `b(v) = -D⁻ Ā^N(v) + ν D² v`.
pub fn drift(v: &GridVector, nf: &NumericalFlux, nu: f64) -> GridVector {
    let n = v.len();
    let mut scratch = vec![0.0; n];
    let mut out = vec![0.0; n];
    drift_into(v.values(), nf, nu, &mut scratch, &mut out);
    GridVector::from_raw(v.spec(), out)
}

/// Fills `jac` with the exact Jacobian of the drift at `v`.
pub(crate) fn drift_jacobian_into(v: &[f64], nf: &NumericalFlux, nu: f64, jac: &mut CyclicTridiag) {
    let n = v.len();
    let nn = n as f64;
    let visc = nu * nn * nn;
    let linear = nf.source().is_zero();
    let (lower, diag, upper) = jac.bands_mut();
    for i in 0..n {
        let prev = if i == 0 { n - 1 } else { i - 1 };
        let next = if i + 1 == n { 0 } else { i + 1 };
        if linear {
            lower[i] = visc;
            diag[i] = -2.0 * visc;
            upper[i] = visc;
        } else {
            lower[i] = nn * nf.d1_abar(v[prev], v[i]) + visc;
            diag[i] = nn * (nf.d2_abar(v[prev], v[i]) - nf.d1_abar(v[i], v[next])) - 2.0 * visc;
            upper[i] = -nn * nf.d2_abar(v[i], v[next]) + visc;
        }
    }
}

/// Exact Jacobian of [`drift`] at `v`, a cyclic tridiagonal matrix.
pub fn drift_jacobian(v: &GridVector, nf: &NumericalFlux, nu: f64) -> CyclicTridiag {
    let mut jac = CyclicTridiag::zeros(v.len());
    drift_jacobian_into(v.values(), nf, nu, &mut jac);
    jac
}
