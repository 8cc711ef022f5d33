//! Composite Gauss–Legendre rules and panel interpolation.

use ma1_core::quadrature::{build_grid, gauss_legendre, lagrange_weights};
use proptest::prelude::*;

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * t + a)
}

fn poly_integral(c: &[f64], a: f64, b: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(k, ck)| ck * (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k + 1) as f64)
        .sum()
}

#[test]
fn reference_rule_is_symmetric_and_sums_to_two() {
    for m in 2..=32 {
        let (x, w) = gauss_legendre(m);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "order {m}");
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        for k in 0..m {
            assert!((x[k] + x[m - 1 - k]).abs() < 1e-14);
            assert!((w[k] - w[m - 1 - k]).abs() < 1e-14);
        }
    }
}

#[test]
fn invalid_grids_are_rejected() {
    assert!(build_grid((1.0, 0.0), 4, 8).is_err());
    assert!(build_grid((0.0, 1.0), 0, 8).is_err());
    assert!(build_grid((0.0, 1.0), 4, 1).is_err());
    assert!(build_grid((0.0, f64::INFINITY), 4, 8).is_err());
    let g = build_grid((0.0, 1.0), 4, 8).unwrap();
    assert!(g.integrate(&[1.0; 3]).is_err());
}

#[test]
fn gaussian_mass() {
    let g = build_grid((-8.0, 8.0), 32, 8).unwrap();
    let f: Vec<f64> = g.nodes.iter().map(|y| (-0.5 * y * y).exp()).collect();
    let want = (2.0 * std::f64::consts::PI).sqrt();
    assert!((g.integrate(&f).unwrap() - want).abs() < 1e-12);
}

#[test]
fn interpolation_outside_the_grid() {
    let g = build_grid((-1.0, 1.0), 4, 6).unwrap();
    let v: Vec<f64> = g.nodes.iter().map(|y| y * y).collect();
    assert_eq!(g.interpolate(&v, -2.0, 7.0), 0.0);
    assert_eq!(g.interpolate(&v, 2.0, 7.0), 7.0);
}

#[test]
fn two_point_rule_on_unit_interval() {
    let g = build_grid((0.0, 1.0), 1, 2).unwrap();
    let h = 0.5 / 3f64.sqrt();
    assert!((g.nodes[0] - (0.5 - h)).abs() < 1e-15 && (g.nodes[1] - (0.5 + h)).abs() < 1e-15);
    assert!(g.weights.iter().all(|w| (w - 0.5).abs() < 1e-15));
}

#[test]
fn degree_seven_on_four_panels() {
    let g = build_grid((0.0, 1.0), 4, 8).unwrap();
    let f: Vec<f64> = g.nodes.iter().map(|t| t.powi(7)).collect();
    assert!((g.integrate(&f).unwrap() - 0.125).abs() < 1e-14);
    let ones = vec![1.0; g.len()];
    assert!((g.integrate(&ones).unwrap() - 1.0).abs() < 1e-14);
    assert!((g.integrate(&g.nodes).unwrap() - 0.5).abs() < 1e-14);
    assert!(g.nodes.windows(2).all(|p| p[0] < p[1]));
    assert!(g.nodes[0] > 0.0 && g.nodes[g.len() - 1] < 1.0);
    let r = g.refine();
    assert_eq!(r.n_panels(), 8);
    assert!((r.weights.iter().sum::<f64>() - g.weights.iter().sum::<f64>()).abs() < 1e-15);
}

#[test]
fn standard_normal_mass_on_production_grid() {
    let g = build_grid((-7.0, 7.0), 64, 8).unwrap();
    let f: Vec<f64> = g.nodes.iter().map(|&y| ma1_core::InnovationModel::Normal.pdf(y)).collect();
    let want = 1.0 - libm::erfc(7.0 / 2f64.sqrt());
    assert!((g.integrate(&f).unwrap() - want).abs() < 1e-14);
}

#[test]
fn doubling_panels_shrinks_error() {
    let want = std::f64::consts::PI.sqrt() * libm::erf(3.0);
    let err = |panels: usize| {
        let g = build_grid((-3.0, 3.0), panels, 4).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|t| (-t * t).exp()).collect();
        (g.integrate(&f).unwrap() - want).abs()
    };
    let mut prev = err(1);
    for k in 1..8 {
        let e = err(1 << k);
        if prev < 1e-13 {
            break;
        }
        assert!(e <= prev / 4.0 || e < 1e-13, "{} panels: {e} after {prev}", 1 << k);
        prev = e;
    }
}

proptest! {
    #[test]
    fn polynomials_of_degree_2m_minus_1_are_exact(
        m in 2usize..12,
        panels in 1usize..6,
        a in -3.0f64..0.0,
        len in 0.5f64..4.0,
        seed in prop::collection::vec(-1.0f64..1.0, 24),
    ) {
        let b = a + len;
        let c = &seed[..2 * m];
        let g = build_grid((a, b), panels, m).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|&t| poly(c, t)).collect();
        let want = poly_integral(c, a, b);
        let scale = c.iter().map(|v| v.abs()).sum::<f64>() * len * (a.abs().max(b.abs()) + 1.0).powi(2 * m as i32);
        prop_assert!((g.integrate(&f).unwrap() - want).abs() < 1e-13 * scale);
    }

    #[test]
    fn refinement_doubles_panels_and_keeps_integrals(panels in 1usize..20, m in 2usize..10) {
        let g = build_grid((-2.0, 3.0), panels, m).unwrap();
        let r = g.refine();
        prop_assert_eq!(r.n_panels(), 2 * panels);
        prop_assert_eq!(r.len(), 2 * g.len());
        prop_assert_eq!(r.bounds, g.bounds);
        prop_assert!((r.weights.iter().sum::<f64>() - 5.0).abs() < 1e-13);
        let f = |t: f64| t.sin() * (-0.1 * t * t).exp();
        let sum = |q: &ma1_core::QuadratureGrid| -> f64 { q.nodes.iter().zip(&q.weights).map(|(t, w)| w * f(*t)).sum() };
        let reference = sum(&build_grid((-2.0, 3.0), 64, 16).unwrap());
        let (coarse, fine) = (sum(&g), sum(&r));
        prop_assert!((fine - reference).abs() <= (coarse - reference).abs() + 1e-14);
    }

    #[test]
    fn lagrange_basis_is_a_partition_of_unity(t in -1.5f64..1.5, m in 2usize..12) {
        let (x, _) = gauss_legendre(m);
        let l = lagrange_weights(&x, t);
        prop_assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        // and reproduces the identity
        let s: f64 = l.iter().zip(&x).map(|(a, b)| a * b).sum();
        prop_assert!((s - t).abs() < 1e-10);
    }

    #[test]
    fn panel_interpolation_is_exact_for_low_degree(t in -2.0f64..2.0, c in prop::collection::vec(-1.0f64..1.0, 6)) {
        let g = build_grid((-2.0, 2.0), 5, 6).unwrap();
        let v: Vec<f64> = g.nodes.iter().map(|&y| poly(&c, y)).collect();
        prop_assert!((g.interpolate(&v, t, 0.0) - poly(&c, t)).abs() < 1e-11);
    }

    #[test]
    fn integrate_fn_honours_subintervals(a in -2.0f64..0.0, b in 0.1f64..2.0, brk in -1.0f64..1.0) {
        let g = build_grid((-2.0, 2.0), 8, 8).unwrap();
        let got = g.integrate_fn(|t| t * t, a, b, &[brk]);
        prop_assert!((got - (b.powi(3) - a.powi(3)) / 3.0).abs() < 1e-13);
    }
}
