//! Root/weight expansion for negative coefficients.

use ma1_core::negrho::{delta_gamma, from_modes, solve_delta, solve_gamma, u_asymptotic_neg, u_delta_gamma};
use ma1_core::recurrence::{bell_u, Recurrence};
use ma1_core::spectral::{
    determinant_coefficients, power_sums_trace, u_via_determinant_series, DiscreteOperator,
};
use ma1_core::{c64, montecarlo, Error, GridSpec, InnovationModel, Ma1Problem};
use proptest::prelude::*;

fn c(re: f64) -> c64 {
    c64::new(re, 0.0)
}

fn setup(rho: f64, x: f64) -> (Recurrence, DiscreteOperator) {
    let p = Ma1Problem::new(rho, x, InnovationModel::Normal).unwrap();
    let rec = Recurrence::new(p, GridSpec::default()).unwrap();
    let op = DiscreteOperator::new(&p, &GridSpec::default()).unwrap();
    (rec, op)
}

/// `u_n - v_n - sum_{k<n} v_k u_{n-1-k}` with `u_{-1} = 1`, the convolution
/// the expansion must satisfy for `v_k = sum beta nu^k`.
fn substitution_residual(beta: &[c64], nu: &[c64], u: &[c64]) -> f64 {
    let v: Vec<c64> = (0..u.len())
        .map(|k| beta.iter().zip(nu).map(|(b, v)| b * v.powu(k as u32)).sum())
        .collect();
    (0..u.len())
        .map(|n| {
            let conv: c64 = (0..n).map(|k| v[k] * u[n - 1 - k]).sum();
            (u[n] - v[n] - conv).norm()
        })
        .fold(0.0, f64::max)
}

#[test]
fn one_mode_closed_form() {
    let (b, v) = (0.4, 0.3);
    let e = from_modes(&[c(b)], &[c(v)], 1).unwrap();
    assert!((e.delta[0] - c(v + b)).norm() < 1e-14);
    assert!((e.gamma[0] - c(b)).norm() < 1e-14);
    for n in 0..10 {
        assert!((e.value(n).re - b * (v + b).powi(n as i32)).abs() < 1e-14);
    }
}

#[test]
fn two_mode_quadratic() {
    // 0.7/(d - 0.5) + 0.3/(d + 0.2) = 1  <=>  d^2 - 1.3 d - 0.09 = 0.
    let beta = [c(0.7), c(0.3)];
    let nu = [c(0.5), c(-0.2)];
    let d = solve_delta(&beta, &nu, 2).unwrap();
    let s = 2.05f64.sqrt();
    assert!((d[0] - c((1.3 + s) / 2.0)).norm() < 1e-13);
    assert!((d[1] - c((1.3 - s) / 2.0)).norm() < 1e-13);
    let g = solve_gamma(&d, &nu, 2).unwrap();
    // Cauchy rows by hand.
    for k in 0..2 {
        let row: c64 = (0..2).map(|j| g[j] / (d[j] - nu[k])).sum();
        assert!((row - c(1.0)).norm() < 1e-13);
    }
    let e = from_modes(&beta, &nu, 2).unwrap();
    let u: Vec<c64> = (0..15).map(|n| e.value(n)).collect();
    assert!(substitution_residual(&beta, &nu, &u) < 1e-10);
    // |delta_1| > 1 here, so the probability route refuses it.
    assert!(matches!(u_delta_gamma(&e, 5), Err(Error::NotDecaying(_))));
}

#[test]
fn a_root_outside_the_unit_disk_is_refused() {
    let e = from_modes(&[c(1.0)], &[c(0.6)], 1).unwrap();
    assert!((e.delta[0] - c(1.6)).norm() < 1e-14);
    assert!(matches!(u_delta_gamma(&e, 3), Err(Error::NotDecaying(d)) if (d - 1.6).abs() < 1e-12));
}

#[test]
fn coincident_poles_are_degenerate() {
    let r = from_modes(&[c(0.2), c(0.3)], &[c(0.4), c(0.4)], 2);
    assert!(r.is_err());
    assert!(solve_delta(&[c(0.2)], &[c(0.4)], 2).is_err());
}

#[test]
fn bordered_expansion_matches_the_bell_route() {
    // Thresholds where the bordered spectrum resolves to 1e-5; the harder
    // ones are tracked by the acceptance run.
    for &(rho, x) in &[(-0.5, 1.0), (-0.5, 2.0), (-0.3, 1.0), (-0.5, 0.0)] {
        let (rec, op) = setup(rho, x);
        let e = delta_gamma(&op).unwrap();
        assert!(e.residuals.root < 1e-8, "rho={rho} x={x}: root residual {}", e.residuals.root);
        assert!(e.residuals.solve < 1e-4, "rho={rho} x={x}: sum gamma - 1 = {}", e.residuals.solve);
        assert!(e.delta[0].norm() < 1.0);
        let u = u_delta_gamma(&e, 20).unwrap().u;
        let bell = bell_u(&rec.compute_v(21), 20).unwrap().u;
        let err = u.iter().zip(&bell).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "rho={rho} x={x}: {err}");
    }
}

#[test]
fn leading_root_is_real_and_asymptote_positive() {
    let (rec, op) = setup(-0.5, 2.0);
    let e = delta_gamma(&op).unwrap();
    assert!(e.delta[0].im.abs() < 1e-12 && e.delta[0].re > 0.0);
    let a = u_asymptotic_neg(&e, 0);
    assert!((a.value - e.gamma[0].re).abs() < 1e-15);
    let a60 = u_asymptotic_neg(&e, 60);
    assert!(a60.value > 0.0 && a60.gap < 1.0);
    let u = rec.u_exact(60).unwrap().u;
    assert!((u[60] / u[59] - e.delta[0].re).abs() < 1e-6);
}

#[test]
fn long_horizon_against_simulation() {
    let (rec, op) = setup(-0.5, 2.0);
    let e = delta_gamma(&op).unwrap();
    let u50 = u_delta_gamma(&e, 50).unwrap().u[50];
    let ex = rec.u_exact(50).unwrap().u[50];
    let mc = montecarlo::estimate(&op.problem, 50, 1_000_000, 11).unwrap();
    assert!((u50 - mc.p_hat).abs() < 4.0 * mc.se, "{u50} vs {} +- {}", mc.p_hat, mc.se);
    assert!((u50 - ex).abs() < 1e-6);
}

#[test]
fn determinant_zeros_are_the_leading_roots() {
    let (rec, op) = setup(-0.5, 1.0);
    let e = delta_gamma(&op).unwrap();
    let n_max = 30;
    let d = determinant_coefficients(&power_sums_trace(&op, n_max + 1));
    let ds = u_via_determinant_series(&d, &rec.compute_v(n_max + 1), n_max).unwrap();
    assert!((ds.roots[0] - e.delta[0]).norm() < 1e-6, "{} vs {}", ds.roots[0], e.delta[0]);
    let bell = bell_u(&rec.compute_v(n_max + 1), n_max).unwrap().u;
    assert!(ds.u.u.iter().zip(&bell).all(|(a, b)| (a - b).abs() < 1e-8));
}

fn distinct_poles(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.6f64..0.6, n).prop_filter("poles must be separated", |v| {
        v.iter().enumerate().all(|(i, a)| v[..i].iter().all(|b| (a - b).abs() > 0.05))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expansion_satisfies_the_convolution_recurrence(
        (nu, beta) in (1usize..=5).prop_flat_map(|n| (distinct_poles(n), prop::collection::vec(0.01f64..0.08, n)))
    ) {
        let nu: Vec<c64> = nu.into_iter().map(c).collect();
        let beta: Vec<c64> = beta.into_iter().map(c).collect();
        let e = from_modes(&beta, &nu, nu.len()).unwrap();
        // Positive weights keep every root below max nu + sum beta < 1.
        prop_assert!(e.delta[0].norm() < 1.0);
        let u: Vec<c64> = (0..=30).map(|n| e.value(n)).collect();
        prop_assert!(substitution_residual(&beta, &nu, &u) < 1e-9);
        prop_assert!(e.residuals.root < 1e-10);
        prop_assert!(e.residuals.solve < 1e-9);
    }

    #[test]
    fn weights_sum_to_the_first_term(
        (nu, beta) in (1usize..=4).prop_flat_map(|n| (distinct_poles(n), prop::collection::vec(0.01f64..0.1, n)))
    ) {
        // u_0 = v_0 = sum beta.
        let nu: Vec<c64> = nu.into_iter().map(c).collect();
        let beta: Vec<c64> = beta.into_iter().map(c).collect();
        let e = from_modes(&beta, &nu, nu.len()).unwrap();
        let sb: c64 = beta.iter().sum();
        prop_assert!((e.gamma.iter().sum::<c64>() - sb).norm() < 1e-10);
    }
}
