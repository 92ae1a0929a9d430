//! Cyclic tridiagonal systems and the spectrum of the periodic second difference.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, GridVector};

/// Systems at or below this size are solved densely.
const DENSE_CUTOFF: usize = 8;
/// Relative pivot threshold below which a system is declared singular.
const PIVOT_TOL: f64 = 1e-14;

/// Matrix whose row `i` couples columns `i-1`, `i`, `i+1` modulo `N`:
/// `(M x)_i = lower[i] x_{i-1} + diag[i] x_i + upper[i] x_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicTridiag {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl CyclicTridiag {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n < 2 || lower.len() != n || upper.len() != n {
            return Err(Error::domain(format!(
                "band lengths {}/{}/{} do not describe an N >= 2 cyclic matrix",
                lower.len(),
                n,
                upper.len()
            )));
        }
        Ok(CyclicTridiag { lower, diag, upper })
    }

    pub fn zeros(n: usize) -> Self {
        CyclicTridiag {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        CyclicTridiag {
            lower: vec![0.0; n],
            diag: vec![1.0; n],
            upper: vec![0.0; n],
        }
    }

    /// The periodic stencil `scale * (1, -2, 1)`.
    pub fn second_difference(n: usize, scale: f64) -> Self {
        CyclicTridiag {
            lower: vec![scale; n],
            diag: vec![-2.0 * scale; n],
            upper: vec![scale; n],
        }
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn bands(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.lower, &self.diag, &self.upper)
    }

    pub(crate) fn bands_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (&mut self.lower, &mut self.diag, &mut self.upper)
    }

    /// `I - factor * self`.
    pub fn identity_minus(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.lower.iter_mut().for_each(|x| *x *= -factor);
        out.upper.iter_mut().for_each(|x| *x *= -factor);
        out.diag.iter_mut().for_each(|x| *x = 1.0 - factor * *x);
        out
    }

    /// In-place `self ← I - factor * self`.
    pub(crate) fn make_identity_minus(&mut self, factor: f64) {
        self.lower.iter_mut().for_each(|x| *x *= -factor);
        self.upper.iter_mut().for_each(|x| *x *= -factor);
        self.diag.iter_mut().for_each(|x| *x = 1.0 - factor * *x);
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.size();
        assert_eq!(x.len(), n);
        for i in 0..n {
            let prev = if i == 0 { n - 1 } else { i - 1 };
            let next = if i + 1 == n { 0 } else { i + 1 };
            out[i] = self.lower[i] * x[prev] + self.diag[i] * x[i] + self.upper[i] * x[next];
        }
    }

    /// Row-major dense copy. For `N = 2` the two off-diagonal bands land on the same entry.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.size();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            a[i * n + prev] += self.lower[i];
            a[i * n + i] += self.diag[i];
            a[i * n + next] += self.upper[i];
        }
        a
    }

    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.diag)
            .chain(&self.upper)
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Solves `self · x = rhs`.
    ///
    /// Thomas elimination with a Sherman–Morrison correction for the two
    /// corner entries; small systems go through dense Gaussian elimination.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.size();
        if rhs.len() != n {
            return Err(Error::domain(format!("rhs length {} != {}", rhs.len(), n)));
        }
        if n <= DENSE_CUTOFF {
            return dense_solve(self.to_dense(), rhs.to_vec(), self.max_norm());
        }
        let tol = PIVOT_TOL * self.max_norm().max(1.0);
        let alpha = self.upper[n - 1]; // bottom-left corner, row N-1 column 0
        let beta = self.lower[0]; // top-right corner, row 0 column N-1
        let gamma = -self.diag[0];
        if gamma.abs() <= tol {
            return Err(Error::Solver(format!("zero leading diagonal {gamma:e}")));
        }
        let mut diag = self.diag.clone();
        diag[0] -= gamma;
        diag[n - 1] -= alpha * beta / gamma;

        let mut x = rhs.to_vec();
        let mut z = vec![0.0; n];
        z[0] = gamma;
        z[n - 1] = alpha;
        thomas_pair(&self.lower, &diag, &self.upper, &mut x, &mut z, tol)?;

        let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
        if denom.abs() <= PIVOT_TOL {
            return Err(Error::Solver(format!("Sherman–Morrison denominator {denom:e}")));
        }
        let fact = (x[0] + beta * x[n - 1] / gamma) / denom;
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi -= fact * zi;
        }
        Ok(x)
    }
}

/// Tridiagonal elimination (non-periodic) applied to two right-hand sides at once.
fn thomas_pair(lower: &[f64], diag: &[f64], upper: &[f64], r1: &mut [f64], r2: &mut [f64], tol: f64) -> Result<()> {
    let n = diag.len();
    let mut gam = vec![0.0; n];
    let mut bet = diag[0];
    if bet.abs() <= tol {
        return Err(Error::Solver(format!("pivot {bet:e} at row 0")));
    }
    r1[0] /= bet;
    r2[0] /= bet;
    for j in 1..n {
        gam[j] = upper[j - 1] / bet;
        bet = diag[j] - lower[j] * gam[j];
        if bet.abs() <= tol {
            return Err(Error::Solver(format!("pivot {bet:e} at row {j}")));
        }
        r1[j] = (r1[j] - lower[j] * r1[j - 1]) / bet;
        r2[j] = (r2[j] - lower[j] * r2[j - 1]) / bet;
    }
    for j in (0..n - 1).rev() {
        r1[j] -= gam[j + 1] * r1[j + 1];
        r2[j] -= gam[j + 1] * r2[j + 1];
    }
    Ok(())
}

/// Gaussian elimination with partial pivoting on a row-major `n × n` matrix.
pub(crate) fn dense_solve(mut a: Vec<f64>, mut b: Vec<f64>, scale: f64) -> Result<Vec<f64>> {
    let n = b.len();
    let tol = PIVOT_TOL * scale.max(1.0);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        let pivot = a[pivot_row * n + col];
        if pivot.abs() <= tol {
            return Err(Error::Solver(format!("pivot {pivot:e} in column {col}")));
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / pivot;
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    Ok(x)
}

/// Solves `m · x = rhs` for a zero-mean right-hand side and re-centres the result.
pub fn solve_cyclic(m: &CyclicTridiag, rhs: &GridVector) -> Result<GridVector> {
    let x = m.solve(rhs.values())?;
    let mut out = GridVector::from_raw(rhs.spec(), x);
    out.recentre();
    Ok(out)
}

/// Eigenvalues `-2N²(1 - cos(2π m / N))`, `m = 0..N-1`, of the periodic second difference.
///
/// Evaluated as `-4N² sin²(π m / N)` to stay accurate when `m/N` is small.
pub fn circulant_spectrum(spec: GridSpec) -> Vec<f64> {
    let n = spec.n_cells();
    (0..n).map(|m| second_difference_eigenvalue(n, m)).collect()
}

#[inline]
pub(crate) fn second_difference_eigenvalue(n: usize, m: usize) -> f64 {
    let nn = n as f64;
    let s = (PI * m as f64 / nn).sin();
    -4.0 * nn * nn * s * s
}

/// One real Fourier eigenvector of the periodic second difference,
/// normalised to unit Euclidean length.
#[derive(Debug, Clone)]
pub struct FourierMode {
    pub frequency: usize,
    pub eigenvalue: f64,
    pub vector: Vec<f64>,
}

/// `cos(2π m j / N)` or `sin(2π m j / N)`, `j = 0..N-1`, unnormalised.
pub fn fourier_vector(spec: GridSpec, m: usize, sine: bool) -> Vec<f64> {
    let n = spec.n_cells();
    (0..n)
        .map(|j| {
            let t = 2.0 * PI * ((m * j) % n) as f64 / n as f64;
            if sine {
                t.sin()
            } else {
                t.cos()
            }
        })
        .collect()
}

/// Orthonormal real Fourier basis of the zero-mean subspace (the constant mode is excluded).
pub fn zero_mean_fourier_basis(spec: GridSpec) -> Vec<FourierMode> {
    let n = spec.n_cells();
    let mut out = Vec::with_capacity(n - 1);
    for m in 1..=n / 2 {
        let eigenvalue = second_difference_eigenvalue(n, m);
        let nyquist = 2 * m == n;
        let mut vectors = vec![fourier_vector(spec, m, false)];
        if !nyquist {
            vectors.push(fourier_vector(spec, m, true));
        }
        for mut v in vectors {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(FourierMode {
                frequency: m,
                eigenvalue,
                vector: v,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn residual(m: &CyclicTridiag, x: &[f64], rhs: &[f64]) -> f64 {
        m.apply(x).iter().zip(rhs).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    #[test]
    fn identity_solve_returns_rhs() {
        for n in [2, 3, 8, 9, 20] {
            let rhs: Vec<f64> = (0..n).map(|i| i as f64 - 0.5).collect();
            let x = CyclicTridiag::identity(n).solve(&rhs).unwrap();
            for (a, b) in x.iter().zip(&rhs) {
                assert_relative_eq!(a, b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn resolvent_on_alternating_eigenvector() {
        let spec = GridSpec::new(4).unwrap();
        let m = CyclicTridiag::second_difference(4, 0.1 * 16.0).identity_minus(0.1);
        let rhs = GridVector::new(spec, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let x = solve_cyclic(&m, &rhs).unwrap();
        for (a, b) in x.values().iter().zip(rhs.values()) {
            assert_relative_eq!(*a, b / 1.64, epsilon = 1e-14);
        }
    }

    #[test]
    fn thomas_path_matches_dense_path() {
        let n = 12;
        let lower: Vec<f64> = (0..n).map(|i| 0.3 + 0.01 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.2 - 0.02 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.1 * i as f64).collect();
        let m = CyclicTridiag::new(lower, diag, upper).unwrap();
        let rhs: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let x = m.solve(&rhs).unwrap();
        let y = dense_solve(m.to_dense(), rhs.clone(), m.max_norm()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
        assert!(residual(&m, &x, &rhs) < 1e-13);
    }

    #[test]
    fn two_cell_matrix_folds_bands() {
        let m = CyclicTridiag::new(vec![1.0, 2.0], vec![5.0, 7.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(m.to_dense(), vec![5.0, 4.0, 6.0, 7.0]);
        let x = m.solve(&[1.0, 2.0]).unwrap();
        assert!(residual(&m, &x, &[1.0, 2.0]) < 1e-14);
    }

    #[test]
    fn singular_systems_are_reported() {
        let zero = CyclicTridiag::zeros(4);
        assert!(matches!(zero.solve(&[1.0; 4]), Err(Error::Solver(_))));
        // The periodic Laplacian annihilates constants.
        let lap = CyclicTridiag::second_difference(16, 1.0);
        assert!(matches!(lap.solve(&[0.0; 16]), Err(Error::Solver(_))));
        assert!(CyclicTridiag::new(vec![0.0; 3], vec![1.0; 4], vec![0.0; 4]).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let s32 = circulant_spectrum(GridSpec::new(32).unwrap());
        assert_eq!(s32[0], 0.0);
        assert_relative_eq!(s32[1], -39.351_745_734_184_08, max_relative = 1e-13);
        assert_relative_eq!(s32[1], -2.0 * 1024.0 * (1.0 - (2.0 * PI / 32.0).cos()), max_relative = 1e-12);
        let s4 = circulant_spectrum(GridSpec::new(4).unwrap());
        assert_relative_eq!(s4[2], -64.0, epsilon = 1e-12);
    }

    #[test]
    fn basis_is_orthonormal() {
        for n in [5, 8] {
            let basis = zero_mean_fourier_basis(GridSpec::new(n).unwrap());
            assert_eq!(basis.len(), n - 1);
            for a in &basis {
                for b in &basis {
                    let d: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
                    let expect = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                    assert_relative_eq!(d, expect, epsilon = 1e-13);
                }
                assert!(a.vector.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }
}
