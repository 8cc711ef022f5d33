//! Negative-coefficient route: `u_n = sum_j gamma_j delta_j^n`, where the
//! `delta_j` solve `sum_k beta_k / (delta - nu_k) = 1` and the `gamma_j`
//! solve the Cauchy system `sum_j gamma_j / (delta_j - nu_k) = 1`.
//!
//! Truncating the pole set to a handful of modes does not converge for
//! `rho < 0`: the `beta_k` of the discarded modes are not small. The
//! production route therefore works with every pole of the discrete
//! operator at once through the bordered matrix
//!
//! ```text
//! M = [ A      F ]
//!     [ a_inf  1 ]
//! ```
//!
//! whose eigenvalues are exactly the roots of the rational equation over
//! the full discrete spectrum, and whose spectral projections give the
//! `gamma_j`. The truncation `N` is then the node count of the grid.

use std::time::Instant;

use faer::{c64, Mat};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, EigPairs};
use crate::recurrence::{MaxCdfResult, Meta, Method};
use crate::spectral::{Asymptote, DiscreteOperator};

/// `beta_k` below this are dropped before solving for the roots.
pub const BETA_FLOOR: f64 = 1e-14;
/// Roots (and root-pole gaps) closer than this are treated as coincident.
pub const DEGENERACY_TOL: f64 = 1e-10;
pub const MAX_CAUCHY_COND: f64 = 1e12;
/// Modes with `|gamma_j| <= GAMMA_FLOOR * max |gamma|` are not retained.
pub const GAMMA_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DeltaGammaResiduals {
    /// Largest root residual: `|sum beta/(delta - nu) - 1|` for the modal
    /// solver, `||M r - delta r|| / ||r||` for the bordered matrix.
    pub root: f64,
    /// `||A gamma - 1||_inf` for the Cauchy solve, `|sum gamma - 1|` for the
    /// bordered matrix.
    pub solve: f64,
}

#[derive(Debug, Clone)]
pub struct DeltaGammaExpansion {
    /// Descending modulus.
    pub delta: Vec<c64>,
    pub gamma: Vec<c64>,
    /// Number of poles `nu_k` the roots were solved against.
    pub trunc: usize,
    pub residuals: DeltaGammaResiduals,
}

/// Roots of `sum_{k<N} beta_k / (delta - nu_k) = 1`.
///
/// They are the eigenvalues of `diag(nu) + beta 1^T`, which avoids
/// expanding the cleared-denominator polynomial. Each root is then polished
/// by Newton's method on the rational form.
pub fn solve_delta(beta: &[c64], nu: &[c64], n: usize) -> Result<Vec<c64>> {
    if n == 0 || n > beta.len() || n > nu.len() {
        return Err(Error::InvalidArgument(format!(
            "truncation must lie in [1, {}], got {n}",
            beta.len().min(nu.len())
        )));
    }
    let poles: Vec<(c64, c64)> = beta[..n]
        .iter()
        .zip(&nu[..n])
        .filter(|(b, _)| b.norm() >= BETA_FLOOR)
        .map(|(b, v)| (*b, *v))
        .collect();
    for a in 0..poles.len() {
        for b in a + 1..poles.len() {
            if (poles[a].1 - poles[b].1).norm() <= DEGENERACY_TOL {
                return Err(Error::Degenerate(format!(
                    "poles nu_{a} and nu_{b} coincide ({})",
                    poles[a].1
                )));
            }
        }
    }
    let m = poles.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let mat = Mat::<c64>::from_fn(m, m, |i, j| poles[i].0 + if i == j { poles[i].1 } else { c64::new(0.0, 0.0) });
    let mut roots: Vec<c64> = linalg::eigvals_c(&mat)?
        .into_par_iter()
        .map(|d| newton_polish(&poles, d))
        .collect();
    let order = linalg::order_by_modulus(&roots);
    roots = order.iter().map(|&k| roots[k]).collect();
    for a in 0..m {
        for b in a + 1..m {
            if (roots[a] - roots[b]).norm() <= DEGENERACY_TOL {
                return Err(Error::Degenerate(format!(
                    "roots delta_{a} and delta_{b} coincide ({})",
                    roots[a]
                )));
            }
        }
    }
    Ok(roots)
}

fn newton_polish(poles: &[(c64, c64)], mut d: c64) -> c64 {
    for _ in 0..50 {
        let mut g = c64::new(-1.0, 0.0);
        let mut dg = c64::new(0.0, 0.0);
        for (b, v) in poles {
            let q = (d - v).inv();
            g += b * q;
            dg -= b * q * q;
        }
        if dg.norm() == 0.0 || !g.norm().is_finite() {
            break;
        }
        let step = g / dg;
        d -= step;
        if step.norm() <= 4.0 * f64::EPSILON * d.norm().max(1e-300) {
            break;
        }
    }
    d
}

fn rational_residual(beta: &[c64], nu: &[c64], d: c64) -> f64 {
    let s: c64 = beta
        .iter()
        .zip(nu)
        .filter(|(b, _)| b.norm() >= BETA_FLOOR)
        .map(|(b, v)| b / (d - v))
        .sum();
    (s - 1.0).norm()
}

/// Solves the Cauchy system `sum_j gamma_j / (delta_j - nu_k) = 1`,
/// `k < N`.
pub fn solve_gamma(delta: &[c64], nu: &[c64], n: usize) -> Result<Vec<c64>> {
    if n == 0 || n > delta.len() || n > nu.len() {
        return Err(Error::InvalidArgument(format!(
            "truncation must lie in [1, {}], got {n}",
            delta.len().min(nu.len())
        )));
    }
    for (j, d) in delta[..n].iter().enumerate() {
        for (k, v) in nu[..n].iter().enumerate() {
            let gap = (d - v).norm();
            if gap <= DEGENERACY_TOL {
                return Err(Error::Degenerate(format!(
                    "delta_{j} = {d} lies within {gap:e} of nu_{k}"
                )));
            }
        }
    }
    let a = Mat::<c64>::from_fn(n, n, |k, j| (delta[j] - nu[k]).inv());
    let cond = linalg::cond_c(&a)?;
    if cond > MAX_CAUCHY_COND {
        return Err(Error::IllConditioned { cond });
    }
    let ones = Mat::<c64>::from_fn(n, 1, |_, _| c64::new(1.0, 0.0));
    let g = linalg::solve_c(&a, &ones);
    Ok((0..n).map(|j| g[(j, 0)]).collect())
}

fn cauchy_residual(delta: &[c64], nu: &[c64], gamma: &[c64]) -> f64 {
    nu.iter()
        .map(|v| {
            let s: c64 = gamma.iter().zip(delta).map(|(g, d)| g / (d - v)).sum();
            (s - 1.0).norm()
        })
        .fold(0.0, f64::max)
}

/// Expansion from `N` retained modes via [`solve_delta`] and [`solve_gamma`].
/// When small `beta_k` are dropped the Cauchy system is set up on the
/// surviving poles.
pub fn from_modes(beta: &[c64], nu: &[c64], n: usize) -> Result<DeltaGammaExpansion> {
    let delta = solve_delta(beta, nu, n)?;
    let poles: Vec<c64> = beta[..n]
        .iter()
        .zip(&nu[..n])
        .filter(|(b, _)| b.norm() >= BETA_FLOOR)
        .map(|(_, v)| *v)
        .collect();
    let gamma = solve_gamma(&delta, &poles, delta.len())?;
    let root = delta
        .iter()
        .map(|d| rational_residual(&beta[..n], &nu[..n], *d))
        .fold(0.0, f64::max);
    let solve = cauchy_residual(&delta, &poles, &gamma);
    Ok(DeltaGammaExpansion {
        delta,
        gamma,
        trunc: n,
        residuals: DeltaGammaResiduals { root, solve },
    })
}

/// The bordered matrix `[[A, F], [a_inf, 1]]` of a discrete operator.
pub fn bordered_matrix(op: &DiscreteOperator) -> Mat<f64> {
    let n = op.dim();
    let f = op.sampled_cdf();
    Mat::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => op.matrix[(i, j)],
        (true, false) => f[i],
        (false, true) => op.sup_row[j],
        (false, false) => 1.0,
    })
}

/// Expansion over the whole discrete spectrum.
///
/// With `u_n = e^T M^n s_0`, `s_0 = (F, 1)` and `e` the last unit vector,
/// `gamma_j = (e^T r_j)(l_j^T s_0) / (l_j^T r_j)`.
pub fn delta_gamma(op: &DiscreteOperator) -> Result<DeltaGammaExpansion> {
    let m = bordered_matrix(op);
    let dim = m.nrows();
    let EigPairs { values, right, left } = linalg::eig_lr(&m)?;
    let mut s0 = op.sampled_cdf();
    s0.push(1.0);
    let mut gamma = Vec::with_capacity(dim);
    let mut root: f64 = 0.0;
    for j in 0..dim {
        let r = linalg::col(&right, j);
        let l = linalg::col(&left, j);
        let lr = linalg::dot_cc(&l, &r);
        if lr.norm() == 0.0 {
            return Err(Error::Degenerate(format!(
                "bordered matrix has a non-diagonal Jordan block at delta = {}",
                values[j]
            )));
        }
        gamma.push(r[dim - 1] * linalg::dot_rc(&s0, &l) / lr);
        let mr: Vec<c64> = (0..dim)
            .map(|i| (0..dim).map(|k| r[k] * m[(i, k)]).sum::<c64>())
            .collect();
        let rn = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let res = mr
            .iter()
            .zip(&r)
            .map(|(a, b)| (a - values[j] * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        root = root.max(res / rn);
    }
    let gmax = gamma.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let keep: Vec<usize> = (0..dim).filter(|&j| gamma[j].norm() > GAMMA_FLOOR * gmax).collect();
    let solve = (gamma.iter().sum::<c64>() - 1.0).norm();
    Ok(DeltaGammaExpansion {
        delta: keep.iter().map(|&j| values[j]).collect(),
        gamma: keep.iter().map(|&j| gamma[j]).collect(),
        trunc: op.dim(),
        residuals: DeltaGammaResiduals { root, solve },
    })
}

impl DeltaGammaExpansion {
    /// `sum_j gamma_j delta_j^n`.
    pub fn value(&self, n: usize) -> c64 {
        self.gamma
            .iter()
            .zip(&self.delta)
            .map(|(g, d)| g * d.powu(n as u32))
            .sum()
    }
}

/// `u_0..=u_{n_max}` from the expansion; fails unless `|delta_1| < 1`.
pub fn u_delta_gamma(exp: &DeltaGammaExpansion, n_max: usize) -> Result<MaxCdfResult> {
    let t0 = Instant::now();
    let d1 = exp.delta.first().map(|d| d.norm()).unwrap_or(0.0);
    if d1 >= 1.0 {
        return Err(Error::NotDecaying(d1));
    }
    let mut imag: f64 = 0.0;
    let u: Vec<f64> = (0..=n_max)
        .map(|n| {
            let s = exp.value(n);
            imag = imag.max(s.im.abs());
            s.re
        })
        .collect();
    let mut notes = vec![format!("{} poles, {} roots", exp.trunc, exp.delta.len())];
    if imag > 1e-6 {
        notes.push(format!("imaginary residue {imag:e} exceeds 1e-6"));
    }
    Ok(MaxCdfResult {
        u,
        method: Method::DeltaGamma,
        err: None,
        meta: Meta {
            elapsed_secs: t0.elapsed().as_secs_f64(),
            grid: None,
            notes,
        },
    })
}

/// `gamma_1 delta_1^n`, summed over roots tied with `|delta_1|`.
pub fn u_asymptotic_neg(exp: &DeltaGammaExpansion, n: usize) -> Asymptote {
    if exp.delta.is_empty() {
        return Asymptote { value: 0.0, gap: 0.0, multiplicity: 0 };
    }
    let d1 = exp.delta[0].norm();
    let mut m = 1;
    while m < exp.delta.len() && exp.delta[m].norm() >= (1.0 - 1e-8) * d1 {
        m += 1;
    }
    let value: c64 = (0..m).map(|j| exp.gamma[j] * exp.delta[j].powu(n as u32)).sum();
    let gap = exp.delta.get(m).map(|d| d.norm() / d1).unwrap_or(0.0);
    Asymptote {
        value: value.re,
        gap,
        multiplicity: m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    #[test]
    fn one_mode() {
        let e = from_modes(&[c(0.3)], &[c(0.4)], 1).unwrap();
        assert!((e.delta[0] - c(0.7)).norm() < 1e-15);
        assert!((e.gamma[0] - c(0.3)).norm() < 1e-15);
    }

    #[test]
    fn two_modes_against_quadratic_formula() {
        // (d - .5)(d + .2) = .7(d + .2) + .3(d - .5)  <=>  d^2 - 1.3 d - 0.09 = 0
        let disc = (1.3f64 * 1.3 + 4.0 * 0.09).sqrt();
        let want = [(1.3 + disc) / 2.0, (1.3 - disc) / 2.0];
        let d = solve_delta(&[c(0.7), c(0.3)], &[c(0.5), c(-0.2)], 2).unwrap();
        for k in 0..2 {
            assert!((d[k] - c(want[k])).norm() < 1e-14);
        }
    }

    #[test]
    fn growing_toy_is_rejected() {
        let e = from_modes(&[c(1.0)], &[c(0.6)], 1).unwrap();
        assert!((e.delta[0] - c(1.6)).norm() < 1e-15);
        assert!(matches!(u_delta_gamma(&e, 5), Err(Error::NotDecaying(_))));
    }

    #[test]
    fn coincident_poles_are_degenerate() {
        assert!(matches!(
            solve_delta(&[c(0.5), c(0.5)], &[c(0.3), c(0.3)], 2),
            Err(Error::Degenerate(_))
        ));
    }
}
