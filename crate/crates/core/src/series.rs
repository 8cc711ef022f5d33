//! Taylor-coefficient eigen-solvers.
//!
//! Differentiating `nu r'(y) = sign(rho) f(y) r((x - y)/rho)` at `y = 0`
//! couples the derivatives `r_k = r^{(k)}(0)` through the matrix `q`; the
//! adjoint equation, differentiated at `z = x`, couples the derivatives of
//! the left eigenfunction through `W`. Truncating either system at order
//! `N` gives finite linear algebra. Nothing guarantees the truncations
//! converge, so every result carries a self-convergence or trust estimate.

use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::innovations::InnovationModel;
use crate::linalg;
use crate::quadrature::build_grid;
use crate::recurrence::Ma1Problem;

/// Largest condition number accepted for the truncated solves.
pub const MAX_SOLVE_COND: f64 = 1e12;
/// A root is stable when it moves less than this between orders `N` and `N + 2`.
pub const STABILITY_TOL: f64 = 1e-6;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients of the right-eigenfunction derivative system about `y = 0`.
#[derive(Debug, Clone)]
pub struct QMatrix {
    pub x: f64,
    pub rho: f64,
    /// `q[i][k]`, `0 <= i, k <= N`.
    pub q: Vec<Vec<f64>>,
    /// `f^{(i)}(0)`, `0 <= i <= N`.
    pub fvec: Vec<f64>,
}

/// `q_ik = rho^{-k} sum_{b <= min(i,k)} C(i,b) f_{i-b} (-1)^b x^{k-b} / (k-b)!`.
pub fn build_q(problem: &Ma1Problem, n: usize) -> Result<QMatrix> {
    let Ma1Problem { rho, x, model } = *problem;
    let fvec = (0..=n).map(|i| model.pdf_deriv(0.0, i)).collect::<Result<Vec<_>>>()?;
    let q = (0..=n)
        .map(|i| {
            (0..=n)
                .map(|k| {
                    let s: f64 = (0..=i.min(k))
                        .map(|b| {
                            let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
                            binomial(i, b) * fvec[i - b] * sign * x.powi((k - b) as i32) / factorial(k - b)
                        })
                        .sum();
                    s * rho.powi(-(k as i32))
                })
                .collect()
        })
        .collect();
    Ok(QMatrix { x, rho, q, fvec })
}

impl QMatrix {
    pub fn order(&self) -> usize {
        self.fvec.len() - 1
    }

    /// `Q_N[l-1][k-1] = q_{l-1,k}` for `1 <= l, k <= N`.
    pub fn truncated(&self, n: usize) -> Mat<f64> {
        Mat::from_fn(n, n, |l, k| self.q[l][k + 1])
    }
}

/// Sampled series solution with its estimated range of validity.
#[derive(Debug, Clone)]
pub struct SeriesFunction {
    /// Expansion point (`0` for right, `x` for left eigenfunctions).
    pub center: f64,
    /// Taylor coefficients `a_m = g^{(m)}(center) / m!`, `a_0 = 1`.
    pub coeffs: Vec<c64>,
    pub points: Vec<f64>,
    pub values: Vec<c64>,
    /// Radius of convergence read off the geometric decay of the coefficients.
    pub radius: f64,
    /// Distance from the center within which the truncation error of the
    /// last retained term is below `1e-8`, capped by `radius`.
    pub trust_radius: f64,
    /// Condition number of the truncated solve.
    pub cond: f64,
}

impl SeriesFunction {
    fn new(center: f64, coeffs: Vec<c64>, points: &[f64], cond: f64) -> Self {
        let values = points.iter().map(|&t| eval_taylor(&coeffs, t - center)).collect();
        let (radius, trust_radius) = trust(&coeffs);
        Self {
            center,
            coeffs,
            points: points.to_vec(),
            values,
            radius,
            trust_radius,
            cond,
        }
    }

    pub fn eval(&self, t: f64) -> c64 {
        eval_taylor(&self.coeffs, t - self.center)
    }

    pub fn trusted(&self, t: f64) -> bool {
        (t - self.center).abs() <= self.trust_radius
    }
}

fn eval_taylor(a: &[c64], h: f64) -> c64 {
    a.iter().rev().fold(c64::new(0.0, 0.0), |acc, c| acc * h + c)
}

/// Least-squares slope of `log|a_m|` over the upper half of the
/// coefficients gives the radius; the trust radius keeps the last term
/// below `1e-8`.
fn trust(a: &[c64]) -> (f64, f64) {
    let n = a.len() - 1;
    let pts: Vec<(f64, f64)> = (n / 2..=n)
        .filter(|&m| m > 0 && a[m].norm() > 0.0)
        .map(|m| (m as f64, a[m].norm().ln()))
        .collect();
    let radius = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        if slope < 0.0 {
            (-slope).exp()
        } else {
            f64::INFINITY.min(1.0 / slope.exp())
        }
    } else {
        f64::INFINITY
    };
    let last = a[n].norm();
    let by_term = if last > 0.0 && n > 0 {
        (1e-8 / last).powf(1.0 / n as f64)
    } else {
        f64::INFINITY
    };
    (radius, by_term.min(radius))
}

/// `r(y)/r(0) = 1 + sum_{m=1}^N y^m/m! [(d I - Q_N)^{-1} f_N]_m` with
/// `d = nu sign(rho)`.
pub fn right_eigenfunction_series(qm: &QMatrix, nu: c64, ys: &[f64]) -> Result<SeriesFunction> {
    let n = qm.order();
    let d = nu * qm.rho.signum();
    let qn = qm.truncated(n);
    let m = Mat::<c64>::from_fn(n, n, |i, j| {
        (if i == j { d } else { c64::new(0.0, 0.0) }) - qn[(i, j)]
    });
    let cond = linalg::cond_c(&m)?;
    if cond > MAX_SOLVE_COND {
        return Err(Error::Singular(format!(
            "d = {d} is within rounding of an eigenvalue of Q_{n} (condition {cond:e})"
        )));
    }
    let rhs = Mat::<c64>::from_fn(n, 1, |i, _| c64::new(qm.fvec[i], 0.0));
    let sol = linalg::solve_c(&m, &rhs);
    let mut coeffs = vec![c64::new(1.0, 0.0)];
    coeffs.extend((0..n).map(|k| sol[(k, 0)] / factorial(k + 1)));
    Ok(SeriesFunction::new(0.0, coeffs, ys, cond))
}

/// The left-eigenfunction derivative system about `z = x`.
#[derive(Debug, Clone)]
pub struct WSystem {
    pub x: f64,
    pub rho: f64,
    /// Full `(N+1) x (N+1)` array `W_ij`, `0 <= i, j <= N`.
    pub w_full: Vec<Vec<f64>>,
    /// `U_i = W_i0`, `1 <= i <= N`.
    pub u: Vec<f64>,
    /// `V_j = W_0j`, `1 <= j <= N`.
    pub v: Vec<f64>,
    pub w00: f64,
    /// `(-rho)^i`, `1 <= i <= N`.
    pub dr: Vec<f64>,
}

/// `W_ij = sum_{a <= min(j, i+1)} C(i+1, a) e_{i+1-a}(x) (-rho)^{i+1-a} (-x)^{j-a}/(j-a)!`
/// with `e_b` the derivatives of `1/f`.
pub fn build_w(problem: &Ma1Problem, n: usize) -> Result<WSystem> {
    let Ma1Problem { rho, x, model } = *problem;
    let e = (0..=n + 1)
        .map(|b| model.recip_pdf_deriv(x, b))
        .collect::<Result<Vec<_>>>()?;
    if !e[0].is_finite() {
        return Err(Error::InvalidArgument(format!(
            "the density vanishes at x = {x}; the left series is undefined"
        )));
    }
    let r = -rho;
    let w_full: Vec<Vec<f64>> = (0..=n)
        .map(|i| {
            (0..=n)
                .map(|j| {
                    (0..=j.min(i + 1))
                        .map(|a| {
                            binomial(i + 1, a)
                                * e[i + 1 - a]
                                * r.powi((i + 1 - a) as i32)
                                * (-x).powi((j - a) as i32)
                                / factorial(j - a)
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(WSystem {
        x,
        rho,
        u: (1..=n).map(|i| w_full[i][0]).collect(),
        v: (1..=n).map(|j| w_full[0][j]).collect(),
        w00: w_full[0][0],
        dr: (1..=n).map(|i| r.powi(i as i32)).collect(),
        w_full,
    })
}

impl WSystem {
    pub fn order(&self) -> usize {
        self.u.len()
    }

    /// `c D_r - W_N`.
    fn pencil(&self, c: c64) -> Mat<c64> {
        let n = self.order();
        Mat::from_fn(n, n, |i, j| {
            (if i == j { c * self.dr[i] } else { c64::new(0.0, 0.0) }) - self.w_full[i + 1][j + 1]
        })
    }

    /// `V'(c D_r - W_N)^{-1} U - (c - W_00)`.
    pub fn eigen_equation(&self, c: c64) -> c64 {
        let n = self.order();
        let rhs = Mat::<c64>::from_fn(n, 1, |i, _| c64::new(self.u[i], 0.0));
        let sol = linalg::solve_c(&self.pencil(c), &rhs);
        let s: c64 = (0..n).map(|i| sol[(i, 0)] * self.v[i]).sum();
        s - (c - self.w00)
    }
}

/// `l(z)/l(x) = 1 + sum_{m=1}^N (z-x)^m/m! [(c D_r - W_N)^{-1} U]_m` with
/// `c = rho^2 / nu`.
pub fn left_eigenfunction_series(ws: &WSystem, nu: c64, zs: &[f64]) -> Result<SeriesFunction> {
    let n = ws.order();
    let c = ws.rho * ws.rho / nu;
    let m = ws.pencil(c);
    let cond = linalg::cond_c(&m)?;
    if cond > MAX_SOLVE_COND {
        return Err(Error::Singular(format!(
            "c = {c} makes c D_r - W_{n} singular (condition {cond:e})"
        )));
    }
    let rhs = Mat::<c64>::from_fn(n, 1, |i, _| c64::new(ws.u[i], 0.0));
    let sol = linalg::solve_c(&m, &rhs);
    let mut coeffs = vec![c64::new(1.0, 0.0)];
    coeffs.extend((0..n).map(|k| sol[(k, 0)] / factorial(k + 1)));
    Ok(SeriesFunction::new(ws.x, coeffs, zs, cond))
}

/// All `N + 1` roots of the truncated eigenvalue equation, as the
/// eigenvalues `c` of `D^{-1} W` with `D = diag((-rho)^i)`, returned as
/// `nu = rho^2 / c` by descending modulus.
pub fn series_roots(ws: &WSystem) -> Result<Vec<c64>> {
    let n = ws.order();
    let r = -ws.rho;
    let m = Mat::<f64>::from_fn(n + 1, n + 1, |i, j| ws.w_full[i][j] / r.powi(i as i32));
    let c = linalg::eigvals(&m)?;
    let mut nu: Vec<c64> = c.iter().map(|c| c.inv() * (ws.rho * ws.rho)).collect();
    let order = linalg::order_by_modulus(&nu);
    nu = order.iter().map(|&k| nu[k]).collect();
    Ok(nu)
}

#[derive(Debug, Clone)]
pub struct SeriesEigenvalues {
    /// Every root at order `N`.
    pub roots: Vec<c64>,
    /// Roots with `|nu| <= 1` that move less than [`STABILITY_TOL`] at `N + 2`.
    pub stable: Vec<c64>,
    pub order: usize,
}

/// Roots of the order-`N` truncation, filtered by agreement with `N + 2`.
pub fn eigenvalues_from_series(problem: &Ma1Problem, n: usize) -> Result<SeriesEigenvalues> {
    if n == 0 {
        return Err(Error::InvalidArgument("series order must be at least 1".into()));
    }
    let roots = series_roots(&build_w(problem, n)?)?;
    let next = series_roots(&build_w(problem, n + 2)?)?;
    let stable: Vec<c64> = roots
        .iter()
        .copied()
        .filter(|r| r.norm() <= 1.0 && next.iter().any(|s| (s - r).norm() < STABILITY_TOL))
        .collect();
    if stable.is_empty() {
        return Err(Error::NoStableRoots(format!(
            "no root of the order-{n} truncation is stable at order {}",
            n + 2
        )));
    }
    Ok(SeriesEigenvalues { roots, stable, order: n })
}

/// The same roots from `sum_i w_i/(c - theta_i) = c - theta_0`, where
/// `theta_i` are the eigenvalues of `D_r^{-1} W_N`, `w_i = v_i u_i`,
/// `v = V' R` and `u = R^{-1} D_r^{-1} U`. Returned as `nu = rho^2 / c`.
pub fn theta_form_roots(ws: &WSystem) -> Result<Vec<c64>> {
    let n = ws.order();
    let dw = Mat::<f64>::from_fn(n, n, |i, j| ws.w_full[i + 1][j + 1] / ws.dr[i]);
    let e = linalg::eig_lr(&dw)?;
    let mut w = Vec::with_capacity(n);
    for k in 0..n {
        // R^{-1} rows are the left vectors scaled to l^T r = 1.
        let r = linalg::col(&e.right, k);
        let l = linalg::col(&e.left, k);
        let s = linalg::dot_cc(&l, &r);
        let vk: c64 = (0..n).map(|i| r[i] * ws.v[i]).sum();
        let uk: c64 = (0..n).map(|i| l[i] * (ws.u[i] / ws.dr[i])).sum::<c64>() / s;
        w.push(vk * uk);
    }
    // Arrowhead matrix whose characteristic equation is the theta form.
    let arrow = Mat::<c64>::from_fn(n + 1, n + 1, |i, j| match (i, j) {
        (0, 0) => c64::new(ws.w00, 0.0),
        (0, j) => w[j - 1],
        (_, 0) => c64::new(1.0, 0.0),
        (i, j) if i == j => e.values[i - 1],
        _ => c64::new(0.0, 0.0),
    });
    let c = linalg::eigvals_c(&arrow)?;
    let mut nu: Vec<c64> = c.iter().map(|c| c.inv() * (ws.rho * ws.rho)).collect();
    let order = linalg::order_by_modulus(&nu);
    nu = order.iter().map(|&k| nu[k]).collect();
    Ok(nu)
}

/// Closed-form mode of the left-exponential model with `rho < -1`:
/// `r(y) = e^{b y}` for `y <= 0`, where `b |nu| / a^2 = e^{b x / rho}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialMode {
    pub b: f64,
    /// `|b |nu| / a^2 - e^{b x/rho}|`.
    pub fixed_point_residual: f64,
    /// `sup |(K r)(y) - nu r(y)|` over `y` in `[lo, min(x, 0)]`, by quadrature.
    pub integral_residual: f64,
}

/// Solves `b |nu| / a^2 = e^{b x / rho}` for `b > 0` by safeguarded Newton
/// and checks the integral equation for `r(y) = e^{b y}` by quadrature.
pub fn exponential_example(a: f64, rho: f64, x: f64, nu: f64) -> Result<ExponentialMode> {
    let model = InnovationModel::exp_left(a)?;
    if rho >= -1.0 {
        return Err(Error::InvalidArgument(format!("the closed form needs rho < -1, got {rho}")));
    }
    if nu >= 0.0 {
        return Err(Error::InvalidArgument(format!("the closed form needs nu < 0, got {nu}")));
    }
    let k = nu.abs() / (a * a);
    let g = |b: f64| b * k - (b * x / rho).exp();
    let dg = |b: f64| k - (x / rho) * (b * x / rho).exp();
    // g(0) = -1 < 0; grow the bracket until g changes sign.
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut grow = 0;
    while g(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 || !hi.is_finite() {
            return Err(Error::NoRoot(format!(
                "b |nu|/a^2 = e^(b x/rho) has no positive root for nu = {nu}, x = {x}"
            )));
        }
    }
    let mut b = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gb = g(b);
        if gb == 0.0 {
            break;
        }
        if gb < 0.0 {
            lo = b;
        } else {
            hi = b;
        }
        let step = gb / dg(b);
        if step.abs() < 1e-16 * b {
            break;
        }
        let nb = b - step;
        b = if nb > lo && nb < hi { nb } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * b {
            break;
        }
    }
    let fixed_point_residual = (b * k - (b * x / rho).exp()).abs();

    let problem = Ma1Problem::new(rho, x, model)?;
    let (lo_y, _) = model.truncation_bounds(1e-12)?;
    let top = x.min(0.0);
    let ys = build_grid((lo_y, top), 32, 4)?.nodes;
    let r = |t: f64| (b * t).exp();
    let mut integral_residual: f64 = 0.0;
    for &y in ys.iter().chain(std::iter::once(&top)) {
        // (K r)(y) = sign(rho) int_{-inf}^{min(y,0)} r((x-w)/rho) f(w) dw; the
        // integrand decays like e^{(a - b/rho) w} to the left.
        let m = y.min(0.0);
        let decay = a - b / rho;
        let span = 40.0 / decay;
        let grid = build_grid((m - span, m), 64, 12)?;
        let kr: f64 = grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .map(|(&w, &wt)| wt * r((x - w) / rho) * model.pdf(w))
            .sum::<f64>()
            * problem.sign();
        integral_residual = integral_residual.max((kr - nu * r(y)).abs());
    }
    Ok(ExponentialMode {
        b,
        fixed_point_residual,
        integral_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_low_order_entries() {
        let p = Ma1Problem::new(0.5, 1.0, InnovationModel::Normal).unwrap();
        let q = build_q(&p, 4).unwrap();
        let f0 = InnovationModel::Normal.pdf(0.0);
        assert!((q.q[0][0] - f0).abs() < 1e-15);
        assert!((q.q[0][1] - f0 * 1.0 / 0.5).abs() < 1e-15);
        for i in 0..=4 {
            assert!((q.q[i][0] - q.fvec[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn w_first_column_is_u() {
        let p = Ma1Problem::new(0.5, 1.0, InnovationModel::Normal).unwrap();
        let ws = build_w(&p, 5).unwrap();
        for i in 1..=5 {
            assert_eq!(ws.u[i - 1], ws.w_full[i][0]);
            assert!((ws.dr[i - 1] - (-0.5f64).powi(i as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn root_count_is_order_plus_one() {
        let p = Ma1Problem::new(0.5, 1.0, InnovationModel::Normal).unwrap();
        for n in [1, 4, 9] {
            assert_eq!(series_roots(&build_w(&p, n).unwrap()).unwrap().len(), n + 1);
        }
    }
}
