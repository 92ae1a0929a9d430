//! Property-based invariants over random grids, states and parameters.

use proptest::prelude::*;

use stochcl::analytic::{gaussian_w2_commuting, lyapunov_covariance, AnalyticCase};
use stochcl::estimator::phi;
use stochcl::flux::{burgers, drift, engquist_osher, FluxModel};
use stochcl::grid::{reconstruct, GridSpec, GridVector};
use stochcl::linops::CyclicTridiag;
use stochcl::noise::{discretize, RngStream};
use stochcl::stepper::{implicit_stage, Stepper, StepperConfig, TrajectoryState};
use stochcl::NoiseModel;

fn vector(values: Vec<f64>) -> GridVector {
    let spec = GridSpec::new(values.len()).unwrap();
    GridVector::from_centred(spec, values).unwrap()
}

fn state(max_n: usize, scale: f64) -> impl Strategy<Value = GridVector> {
    (2..=max_n).prop_flat_map(move |n| prop::collection::vec(-scale..scale, n)).prop_map(vector)
}

fn pair(max_n: usize, scale: f64) -> impl Strategy<Value = (GridVector, GridVector)> {
    (2..=max_n)
        .prop_flat_map(move |n| (prop::collection::vec(-scale..scale, n), prop::collection::vec(-scale..scale, n)))
        .prop_map(|(a, b)| (vector(a), vector(b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cyclic_solve_inverts_apply(
        n in 3usize..48,
        seed in any::<u64>(),
    ) {
        let mut u = vec![0.0; 3 * n];
        RngStream::new(seed, 0).uniforms(0, &mut u);
        let lower: Vec<f64> = u[..n].iter().map(|x| x - 0.5).collect();
        let upper: Vec<f64> = u[n..2 * n].iter().map(|x| x - 0.5).collect();
        let diag: Vec<f64> = (0..n).map(|i| 1.1 + lower[i].abs() + upper[i].abs() + u[2 * n + i]).collect();
        let m = CyclicTridiag::new(lower, diag, upper).unwrap();
        let x: Vec<f64> = u[..n].iter().map(|v| 2.0 * v - 1.0).collect();
        let back = m.solve(&m.apply(&x)).unwrap();
        let err = back.iter().zip(&x).fold(0.0_f64, |e, (a, b)| e.max((a - b).abs()));
        prop_assert!(err <= 1e-12, "err {err}");
    }

    #[test]
    fn summation_by_parts((v, w) in pair(64, 10.0)) {
        let lhs = v.d1_plus().dot(&w);
        let rhs = -v.dot(&w.d1_minus());
        let scale = 1.0 + v.d1_plus().l2_norm() * w.l2_norm();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn reconstructions_respect_their_identities(v in state(64, 5.0)) {
        let n = v.len() as f64;
        let r0 = reconstruct(&v, 0).unwrap();
        let r1 = reconstruct(&v, 1).unwrap();
        let h1 = v.h1_seminorm_sq();
        prop_assert!((r0.l2_norm_sq() - v.l2_norm_sq()).abs() <= 1e-12 * (1.0 + v.l2_norm_sq()));
        prop_assert!((r1.l2_distance_sq(&r0).unwrap() - h1 / (3.0 * n * n)).abs() <= 1e-12 * (1.0 + h1 / (n * n)));
    }

    #[test]
    fn phi_is_bounded_and_lipschitz((v, w) in pair(32, 3.0)) {
        let (a, b) = (phi(&v), phi(&w));
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!((a - b).abs() <= (&v - &w).l2_norm() + 1e-15);
    }

    #[test]
    fn drift_is_dissipative(v in state(64, 4.0), alpha in 0.0f64..5.0, nu in 0.01f64..1.0) {
        let nf = engquist_osher(burgers(alpha).unwrap()).unwrap();
        let lhs = v.dot(&drift(&v, &nf, nu));
        let rhs = -nu * v.h1_seminorm_sq();
        prop_assert!(lhs <= rhs + 1e-10 * (1.0 + lhs.abs() + rhs.abs()));
        prop_assert!(drift(&v, &nf, nu).mean().abs() <= 1e-12 * (1.0 + drift(&v, &nf, nu).linf_norm()));
    }

    #[test]
    fn eo_flux_is_monotone_and_consistent(v in -6.0f64..6.0, w in -6.0f64..6.0, c in -1.0f64..1.0) {
        let model = FluxModel::polynomial(vec![0.0, c, 0.5], vec![-c]).unwrap();
        let nf = engquist_osher(model).unwrap();
        prop_assert!(nf.d1_abar(v, w) >= -1e-14);
        prop_assert!(nf.d2_abar(v, w) <= 1e-14);
        let a = nf.source().a(v);
        prop_assert!((nf.abar(v, v) - a).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn implicit_stage_dissipates_energy(
        v in state(48, 3.0),
        alpha in prop::sample::select(vec![0.0, 1.0]),
        log_dt in -10.0f64..-1.0,
    ) {
        let nf = engquist_osher(burgers(alpha).unwrap()).unwrap();
        let dt = 2f64.powf(log_dt);
        let cfg = StepperConfig::new(0.1, dt).unwrap();
        let w = implicit_stage(&v, &nf, &cfg).unwrap();
        let lhs = w.l2_norm_sq() + 2.0 * 0.1 * dt * w.h1_seminorm_sq();
        prop_assert!(lhs <= v.l2_norm_sq() + 1e-10 * (1.0 + v.l2_norm_sq()));
    }

    #[test]
    fn snapshots_round_trip(v in state(64, 1e3)) {
        let mut buf = Vec::new();
        v.write_snapshot(&mut buf).unwrap();
        prop_assert_eq!(buf.len(), 8 + 8 * v.len());
        let back = GridVector::read_snapshot(&buf[..]).unwrap();
        prop_assert_eq!(back.values(), v.values());
    }

    #[test]
    fn covariances_are_psd_with_constant_kernel(n in 3usize..24, log_dt in -8.0f64..0.0) {
        let spec = GridSpec::new(n).unwrap();
        let dn = discretize(&NoiseModel::single_sine(1, 0).unwrap(), spec);
        for dt in [None, Some(2f64.powf(log_dt))] {
            let k = lyapunov_covariance(&dn, 0.1, dt).unwrap();
            prop_assert!((&k.matrix - k.matrix.transpose()).amax() <= 1e-14);
            let ones = nalgebra::DVector::from_element(n, 1.0);
            prop_assert!((&k.matrix * ones).amax() <= 1e-12);
            let eig = k.matrix.clone().symmetric_eigen();
            prop_assert!(eig.eigenvalues.min() >= -1e-12);
            prop_assert!(gaussian_w2_commuting(&k, &k).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn wasserstein_distances_are_nonnegative(n in 3usize..128, log_dt in -10.0f64..0.0) {
        let case = AnalyticCase::new(0.1, 1, n, Some(2f64.powf(log_dt))).unwrap();
        prop_assert!(case.w2_space() >= 0.0);
        prop_assert!(case.w2_time().unwrap() >= 0.0);
    }
}

#[test]
fn discrete_covariance_converges_at_first_order_in_dt() {
    let spec = GridSpec::new(16).unwrap();
    let dn = discretize(&NoiseModel::single_sine(1, 0).unwrap(), spec);
    let k = lyapunov_covariance(&dn, 0.1, None).unwrap();
    let gap = |dt: f64| (&lyapunov_covariance(&dn, 0.1, Some(dt)).unwrap().matrix - &k.matrix).amax();
    for dt in [2f64.powi(-6), 2f64.powi(-8), 2f64.powi(-10)] {
        let ratio = gap(dt) / gap(dt / 2.0);
        assert!((ratio - 2.0).abs() < 0.05, "dt {dt}: ratio {ratio}");
    }
}

#[test]
fn long_runs_keep_zero_mean() {
    let spec = GridSpec::new(32).unwrap();
    let nf = engquist_osher(burgers(1.0).unwrap()).unwrap();
    let dn = discretize(&NoiseModel::single_sine(1, 3).unwrap(), spec);
    let cfg = StepperConfig::new(0.1, 2f64.powi(-10)).unwrap();
    let mut stepper = Stepper::new(&nf, &dn, cfg).unwrap();
    let mut s = TrajectoryState::new(GridVector::zeros(spec), RngStream::new(3, 0));
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        stepper.advance(&mut s, 1000).unwrap();
        worst = worst.max(s.u.mean().abs());
    }
    assert_eq!(s.step, 1_000_000);
    assert!(worst <= 1e-12, "mean drifted to {worst}");
}
