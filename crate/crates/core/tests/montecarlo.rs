//! Simulation estimates, their coverage and reproducibility.

use ma1_core::montecarlo::{estimate, estimate_curve, CHUNK};
use ma1_core::recurrence::Recurrence;
use ma1_core::{GridSpec, InnovationModel, Ma1Problem};

fn problem(rho: f64, x: f64) -> Ma1Problem {
    Ma1Problem::new(rho, x, InnovationModel::Normal).unwrap()
}

#[test]
fn symmetric_marginal_is_one_half() {
    let e = estimate(&problem(0.6, 0.0), 1, 1_000_000, 3).unwrap();
    assert!((e.p_hat - 0.5).abs() < 4.0 * e.se, "{} +- {}", e.p_hat, e.se);
    assert_eq!(e.n_paths, 1_000_000);
    assert_eq!((e.seed, e.n), (3, 1));
}

#[test]
fn far_threshold_is_certain() {
    let e = estimate(&problem(0.5, 100.0), 10, 100_000, 1).unwrap();
    assert_eq!(e.p_hat, 1.0);
    assert_eq!(e.se, 0.0);
}

#[test]
fn empty_requests_are_rejected() {
    assert!(estimate(&problem(0.5, 1.0), 0, 10, 1).is_err());
    assert!(estimate(&problem(0.5, 1.0), 3, 0, 1).is_err());
    assert!(estimate_curve(&problem(0.5, 1.0), 0, 10, 1).is_err());
}

#[test]
fn nominal_coverage_over_independent_seeds() {
    let p = problem(0.5, 1.0);
    let n = 5;
    let truth = Recurrence::new(p, GridSpec::default()).unwrap().u_exact(n).unwrap().u[n];
    let covered = (1..=100u64)
        .filter(|&seed| {
            let e = estimate(&p, n, 100_000, seed).unwrap();
            (e.p_hat - truth).abs() <= 1.96 * e.se
        })
        .count();
    assert!((93..=97).contains(&covered), "{covered} of 100 intervals cover");
}

#[test]
fn curve_agrees_with_single_horizon_estimates() {
    let p = problem(-0.4, 0.8);
    let c = estimate_curve(&p, 8, 400_000, 9).unwrap();
    let err = c.err.as_ref().unwrap();
    assert_eq!(c.u[0], 1.0);
    assert!(c.u.windows(2).all(|w| w[1] <= w[0]));
    let one = estimate(&p, 1, 400_000, 10).unwrap();
    let se = (err[1].powi(2) + one.se.powi(2)).sqrt();
    assert!((c.u[1] - one.p_hat).abs() < 4.0 * se);
    let same = estimate(&p, 8, 400_000, 9).unwrap();
    assert_eq!(c.u[8], same.p_hat);
}

#[test]
fn independent_of_the_worker_count() {
    // Several chunks so that the split across workers matters.
    let p = problem(0.5, 1.0);
    let paths = 5 * CHUNK + 123;
    let mut runs = Vec::new();
    for t in ["1", "2", "3", "8"] {
        // Only this test touches the variable, and it is read when a pool is built.
        std::env::set_var("MA1_THREADS", t);
        runs.push((estimate(&p, 4, paths, 21).unwrap(), estimate_curve(&p, 4, paths, 21).unwrap().u));
    }
    std::env::remove_var("MA1_THREADS");
    for r in &runs[1..] {
        assert_eq!(r.0, runs[0].0);
        assert_eq!(r.1, runs[0].1);
    }
}
