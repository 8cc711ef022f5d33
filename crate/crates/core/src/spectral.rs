//! Nyström discretization of the Fredholm kernel
//! `K(y, z) = rho * 1{x <= y + rho z} * f(x - rho z)` and its eigen-expansion.
//!
//! Each matrix row integrates over the active `z`-interval exactly: panels cut
//! by the indicator edge are re-quadratured on the active piece, with values
//! interpolated from the panel's own nodes. Beyond the upper grid bound a
//! function is continued by its value there, so the row at `y = hi` evaluates
//! `(K r)(inf)`.

use std::sync::Arc;
use std::time::Instant;

use faer::{c64, Mat};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, EigPairs};
use crate::quadrature::{lagrange_weights, QuadratureGrid};
use crate::recurrence::{GFunction, GridSpec, Ma1Problem, MaxCdfResult, Meta, Method, Recurrence};

/// Retained-mode cap and relative tail threshold.
pub const DEFAULT_MODES: usize = 40;
pub const TAIL_TOL: f64 = 1e-10;
/// Modes below this fraction of `|nu_1|` are rounding noise.
const NOISE_FLOOR: f64 = 1e-13;
/// Largest admissible `|int r_j l_k|`, `j != k`, among retained modes.
pub const BIORTH_TOL: f64 = 1e-8;
const MULTIPLICITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub problem: Ma1Problem,
    pub grid: Arc<QuadratureGrid>,
    /// Entry `(i, j)` approximates `K(y_i, z_j) w_j`.
    pub matrix: Mat<f64>,
    /// Row evaluating `(K r)(inf)`.
    pub sup_row: Vec<f64>,
    /// `int int K(y,z) K(z,y) dy dz`.
    pub norm2sq: f64,
}

fn kernel_row(p: &Ma1Problem, grid: &QuadratureGrid, y: f64) -> Vec<f64> {
    let Ma1Problem { rho, x, model } = *p;
    let mut row = vec![0.0; grid.len()];
    let (lo, hi) = grid.bounds;
    let zs = (x - y) / rho;
    let (slo, shi) = model.support();
    let (s1, s2) = ((x - shi) / rho, (x - slo) / rho);
    let (sa, sb) = if rho > 0.0 { (s1, s2) } else { (s2, s1) };
    let (a, b) = if rho > 0.0 {
        (zs.max(sa), sb)
    } else {
        (sa, zs.min(sb))
    };

    let (ga, gb) = (a.max(lo), b.min(hi));
    if ga < gb {
        for (p, pan) in grid.panels.iter().enumerate() {
            let (ia, ib) = (pan.lo.max(ga), pan.hi.min(gb));
            if ia >= ib {
                continue;
            }
            let r = grid.panel_range(p);
            if ia == pan.lo && ib == pan.hi {
                for k in r {
                    row[k] += rho * grid.weights[k] * model.pdf(x - rho * grid.nodes[k]);
                }
            } else {
                let nodes = grid.panel_nodes(p);
                for (t, w) in grid.rule_on(ia, ib) {
                    let c = rho * w * model.pdf(x - rho * t);
                    for (k, l) in lagrange_weights(nodes, t).iter().enumerate() {
                        row[r.start + k] += c * l;
                    }
                }
            }
        }
    }

    let ta = a.max(hi);
    if ta < b {
        // rho * int_ta^b f(x - rho z) dz, with r continued by r(hi).
        let mass = model.cdf(x - rho * ta) - model.cdf(x - rho * b);
        let p = grid.n_panels() - 1;
        let start = grid.panel_range(p).start;
        for (k, l) in lagrange_weights(grid.panel_nodes(p), hi).iter().enumerate() {
            row[start + k] += mass * l;
        }
    }
    row
}

/// `int int K(y,z) K(z,y)`: the inner integral is a cdf difference, the
/// outer one runs over `s = x - rho z` with a break at the kink `x/(1+rho)`.
fn norm2sq_quadrature(p: &Ma1Problem, grid: &QuadratureGrid) -> f64 {
    let Ma1Problem { rho, x, model } = *p;
    let inner = |z: f64| -> f64 {
        if rho > 0.0 {
            let y0 = (x - rho * z).max((x - z) / rho);
            model.cdf(x - rho * y0)
        } else {
            let (y1, y2) = (x - rho * z, (x - z) / rho);
            if y1 >= y2 {
                0.0
            } else {
                model.cdf(x - rho * y1) - model.cdf(x - rho * y2)
            }
        }
    };
    let (slo, shi) = model.support();
    let (lo, hi) = grid.bounds;
    rho.signum()
        * grid.integrate_fn(
            |s| model.pdf(s) * inner((x - s) / rho),
            lo,
            hi,
            &[x / (1.0 + rho), slo, shi],
        )
}

pub fn discretize(problem: &Ma1Problem, grid: Arc<QuadratureGrid>) -> DiscreteOperator {
    let n = grid.len();
    let rows: Vec<Vec<f64>> = grid
        .nodes
        .par_iter()
        .map(|&y| kernel_row(problem, &grid, y))
        .collect();
    let matrix = Mat::from_fn(n, n, |i, j| rows[i][j]);
    let sup_row = kernel_row(problem, &grid, grid.bounds.1);
    let norm2sq = norm2sq_quadrature(problem, &grid);
    DiscreteOperator {
        problem: *problem,
        grid,
        matrix,
        sup_row,
        norm2sq,
    }
}

impl DiscreteOperator {
    pub fn new(problem: &Ma1Problem, spec: &GridSpec) -> Result<Self> {
        Ok(discretize(problem, Arc::new(problem.grid(spec)?)))
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// `(A r, (K r)(inf))`.
    pub fn apply(&self, r: &[f64]) -> (Vec<f64>, f64) {
        let ar = linalg::matvec(&self.matrix, r);
        let sup = self.sup_row.iter().zip(r).map(|(a, b)| a * b).sum();
        (ar, sup)
    }

    pub fn sampled_cdf(&self) -> Vec<f64> {
        self.grid.nodes.iter().map(|&y| self.problem.model.cdf(y)).collect()
    }

    /// `sum_i A_ii`.
    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).sum()
    }

    /// `trace(A^2)`, the discrete double quadrature of `K(y,z) K(z,y)`.
    pub fn trace_sq(&self) -> f64 {
        let n = self.dim();
        let a = &self.matrix;
        (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)] * a[(j, i)]).sum::<f64>())
            .sum()
    }
}

/// `int F(x_t) dF(t)` with `x_t = min(x - rho t, (x - t)/rho)` over an
/// `x`-grid; for `0 < rho < 1` this equals the squared operator norm.
pub fn norm2sq_growth_check(
    model: &crate::innovations::InnovationModel,
    rho: f64,
    xs: &[f64],
    spec: &GridSpec,
) -> Result<Vec<f64>> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "growth check requires 0 < rho < 1, got {rho}"
        )));
    }
    let grid = crate::quadrature::build_grid(
        model.truncation_bounds(spec.tail_eps)?,
        spec.panels,
        spec.order,
    )?;
    let (lo, hi) = grid.bounds;
    Ok(xs
        .iter()
        .map(|&x| {
            grid.integrate_fn(
                |t| model.cdf((x - rho * t).min((x - t) / rho)) * model.pdf(t),
                lo,
                hi,
                &[x / (1.0 + rho)],
            )
        })
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct SpectralDiagnostics {
    /// `||A r_j - nu_j r_j||_inf` per retained mode.
    pub right_residuals: Vec<f64>,
    /// `||l_j^T A - nu_j l_j^T||_inf` (discrete left vectors, scaled to unit max).
    pub left_residuals: Vec<f64>,
    /// `max_{j,k} |int r_j l_k - delta_jk|` over retained modes.
    pub biorth_error: f64,
    /// `sum_{j > retained} |beta_j nu_j| / |beta_1 nu_1|` over the candidate modes.
    pub beta_tail: f64,
    /// Eigenvalue condition numbers `||l|| ||r|| / |l^T r|` of retained modes.
    pub eigen_cond: Vec<f64>,
    /// Modes that passed the conditioning screen before the tail cut.
    pub reliable_modes: usize,
    pub sum_beta: c64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub problem: Ma1Problem,
    pub grid: Arc<QuadratureGrid>,
    /// Retained eigenvalues, descending modulus.
    pub nu: Vec<c64>,
    /// `r_j(y_i)`, column per mode, `max |r_j| = 1`.
    pub right: Mat<c64>,
    /// Continuous left eigenfunctions `l_j(z_i)`, `int r_j l_j = 1` over the
    /// whole line.
    pub left: Mat<c64>,
    /// Tail integrals `L_j(c_i) = int_{c_i}^inf l_j`, which carry the mass of
    /// `l_j` beyond the upper grid bound.
    pub left_tail: Mat<c64>,
    /// Discrete left vectors `l_j(z_i) w_i`.
    pub left_discrete: Mat<c64>,
    pub right_at_sup: Vec<c64>,
    pub beta: Vec<c64>,
    /// Whole discrete spectrum.
    pub all_nu: Vec<c64>,
    /// Number of modes tied with `|nu_1|`.
    pub multiplicity: usize,
    pub diag: SpectralDiagnostics,
}

/// Dense eigendecomposition keeping at most `k` modes; the count is cut
/// further once `sum |beta_j nu_j|` over dropped modes is below
/// `TAIL_TOL * |beta_1 nu_1|`.
pub fn eigendecompose(op: &DiscreteOperator, k: usize) -> Result<SpectralData> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("mode count must lie in [1, {n}], got {k}")));
    }
    let EigPairs { values, right, left } = linalg::eig_lr(&op.matrix)?;
    let nu1 = values[0].norm();
    let fvals = op.sampled_cdf();
    let mut conds = Vec::new();

    let mut cand = 0;
    let mut rs = Vec::new();
    let mut ls = Vec::new();
    let mut sups = Vec::new();
    let mut betas = Vec::new();
    while cand < k && values[cand].norm() > NOISE_FLOOR * nu1 {
        let mut r = linalg::col(&right, cand);
        let piv = r
            .iter()
            .cloned()
            .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
            .unwrap();
        r.iter_mut().for_each(|v| *v /= piv);
        let mut l = linalg::col(&left, cand);
        let s = linalg::dot_cc(&l, &r);
        if s.norm() == 0.0 {
            return Err(Error::Eigensolver(format!("mode {cand} has l^T r = 0 (non-diagonal Jordan block)")));
        }
        let norm2 = |v: &[c64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let cond = norm2(&r) * norm2(&l) / s.norm();
        l.iter_mut().for_each(|v| *v /= s);
        let sup = linalg::dot_rc(&op.sup_row, &r) / values[cand];
        let beta = sup * linalg::dot_rc(&fvals, &l);
        // Retained modes must stay mutually biorthogonal; past that point the
        // eigenvectors are too ill-conditioned to be trusted.
        let cross = rs
            .iter()
            .zip(&ls)
            .map(|(rk, lk): (&Vec<c64>, &Vec<c64>)| {
                linalg::dot_cc(&l, rk).norm().max(linalg::dot_cc(lk, &r).norm())
            })
            .fold(0.0, f64::max);
        if cross > BIORTH_TOL {
            break;
        }
        conds.push(cond);
        rs.push(r);
        ls.push(l);
        sups.push(sup);
        betas.push(beta);
        cand += 1;
    }
    // A complex mode whose conjugate was cut goes too.
    if cand > 1 && values[cand - 1].im != 0.0 && (values[cand - 2] - values[cand - 1].conj()).norm() > 1e-12 * nu1 {
        cand -= 1;
        for v in [&mut rs, &mut ls] {
            v.pop();
        }
        conds.pop();
        sups.pop();
        betas.pop();
    }
    if cand == 0 {
        return Err(Error::Eigensolver("operator has no resolvable modes".into()));
    }

    let mut multiplicity = 1;
    while multiplicity < cand && values[multiplicity].norm() >= (1.0 - MULTIPLICITY_TOL) * nu1 {
        multiplicity += 1;
    }

    let contrib: Vec<f64> = (0..cand).map(|j| (betas[j] * values[j]).norm()).collect();
    let scale = contrib[0].max(f64::MIN_POSITIVE);
    let mut keep = cand;
    let mut tail = 0.0;
    for m in (multiplicity..cand).rev() {
        if tail + contrib[m] > TAIL_TOL * scale {
            break;
        }
        tail += contrib[m];
        keep = m;
    }
    // Never split a conjugate pair.
    if keep < cand && keep > 0 && values[keep].im != 0.0 && (values[keep] - values[keep - 1].conj()).norm() < 1e-12 * nu1 {
        tail -= contrib[keep];
        keep += 1;
    }
    let keep = keep.max(1);

    let right_m = Mat::from_fn(n, keep, |i, j| rs[j][i]);
    let left_d = Mat::from_fn(n, keep, |i, j| ls[j][i]);
    let tail_op = tail_operator(&op.problem, &op.grid);
    let mut left_c = Mat::<c64>::zeros(n, keep);
    let mut left_t = Mat::<c64>::zeros(n, keep);
    for j in 0..keep {
        let (l, t) = continuous_left(op, &tail_op, values[j], &rs[j], sups[j], &ls[j])?;
        for i in 0..n {
            left_c[(i, j)] = l[i];
            left_t[(i, j)] = t[i];
        }
    }

    let ac = linalg::to_complex(&op.matrix);
    let mut right_residuals = Vec::with_capacity(keep);
    let mut left_residuals = Vec::with_capacity(keep);
    for j in 0..keep {
        let nu = values[j];
        let mut rr: f64 = 0.0;
        let mut lr: f64 = 0.0;
        let lmax = (0..n).map(|i| ls[j][i].norm()).fold(0.0, f64::max);
        for i in 0..n {
            let ar: c64 = (0..n).map(|q| ac[(i, q)] * rs[j][q]).sum();
            rr = rr.max((ar - nu * rs[j][i]).norm());
            let la: c64 = (0..n).map(|q| ls[j][q] * ac[(q, i)]).sum();
            lr = lr.max((la - nu * ls[j][i]).norm() / lmax);
        }
        right_residuals.push(rr);
        left_residuals.push(lr);
    }
    let mut biorth: f64 = 0.0;
    for a in 0..keep {
        for b in 0..keep {
            let g = linalg::dot_cc(&ls[a], &rs[b]);
            let want = if a == b { 1.0 } else { 0.0 };
            biorth = biorth.max((g - want).norm());
        }
    }
    let beta: Vec<c64> = betas[..keep].to_vec();
    let mut warnings = Vec::new();
    if multiplicity > 1 {
        warnings.push(format!(
            "dominant eigenvalue has multiplicity {multiplicity} (|nu_2/nu_1| > 1 - {MULTIPLICITY_TOL:e})"
        ));
    }
    if biorth > 1e-6 {
        warnings.push(format!("biorthogonalisation error {biorth:e}; possible non-diagonal Jordan form"));
    }
    let sum_beta = beta.iter().sum();
    Ok(SpectralData {
        problem: op.problem,
        grid: op.grid.clone(),
        nu: values[..keep].to_vec(),
        right: right_m,
        left: left_c,
        left_tail: left_t,
        left_discrete: left_d,
        right_at_sup: sups[..keep].to_vec(),
        beta,
        all_nu: values,
        multiplicity,
        diag: SpectralDiagnostics {
            right_residuals,
            left_residuals,
            biorth_error: biorth,
            beta_tail: tail / scale,
            eigen_cond: conds[..keep].to_vec(),
            reliable_modes: cand,
            sum_beta,
            warnings,
        },
    })
}

/// Matrix `T` with `(T g)(c_i) = sign(rho) int_{S_i} f(s) g(s) ds`, where
/// `S_i = (-inf, x - rho c_i]` for positive `rho` and `[x - rho c_i, inf)`
/// otherwise. The tail integral `L(c) = int_c^inf l` of a left eigenfunction
/// satisfies `T L = nu L`, and unlike `l` itself it is resolved to full
/// order by the grid because only the integration limit moves.
pub fn tail_operator(problem: &Ma1Problem, grid: &QuadratureGrid) -> Mat<f64> {
    let n = grid.len();
    let rows: Vec<Vec<f64>> = grid
        .nodes
        .par_iter()
        .map(|&c| {
            let b = problem.x - problem.rho * c;
            let (a, b) = if problem.rho > 0.0 {
                (f64::NEG_INFINITY, b)
            } else {
                (b, f64::INFINITY)
            };
            let mut row = weighted_row(problem, grid, a, b);
            row.iter_mut().for_each(|v| *v *= problem.sign());
            row
        })
        .collect();
    Mat::from_fn(n, n, |i, j| rows[i][j])
}

/// Weights `q` with `sum_j q_j g(s_j) ~ int_a^b f(s) g(s) ds`; outside the
/// grid `g` is continued by its extrapolated boundary values.
fn weighted_row(problem: &Ma1Problem, grid: &QuadratureGrid, a: f64, b: f64) -> Vec<f64> {
    let model = &problem.model;
    let (lo, hi) = grid.bounds;
    let mut row = vec![0.0; grid.len()];
    let edge = |p: usize, t: f64, mass: f64, row: &mut Vec<f64>| {
        if mass > 0.0 {
            let rg = grid.panel_range(p);
            for (k, lw) in lagrange_weights(&grid.nodes[rg.clone()], t).iter().enumerate() {
                row[rg.start + k] += mass * lw;
            }
        }
    };
    if a < lo {
        edge(0, lo, model.cdf(b.min(lo)) - model.cdf(a), &mut row);
    }
    if b > hi {
        edge(grid.n_panels() - 1, hi, model.cdf(b) - model.cdf(a.max(hi)), &mut row);
    }
    let (a, b) = (a.max(lo), b.min(hi));
    if a >= b {
        return row;
    }
    for (p, panel) in grid.panels.iter().enumerate() {
        let (pa, pb) = (panel.lo.max(a), panel.hi.min(b));
        if pa >= pb {
            continue;
        }
        let rg = grid.panel_range(p);
        if pa == panel.lo && pb == panel.hi {
            for i in rg {
                row[i] += grid.weights[i] * model.pdf(grid.nodes[i]);
            }
            continue;
        }
        let xs = &grid.nodes[rg.clone()];
        for (t, wt) in grid.rule_on(pa, pb) {
            let fw = wt * model.pdf(t);
            for (k, lw) in lagrange_weights(xs, t).iter().enumerate() {
                row[rg.start + k] += fw * lw;
            }
        }
    }
    row
}

/// Node values of `v` interpolated at `t`, extrapolating the boundary
/// panels' polynomials to the grid bounds outside the grid.
fn interp_clamped(grid: &QuadratureGrid, v: &[c64], t: f64) -> c64 {
    let (lo, hi) = grid.bounds;
    let t = t.clamp(lo, hi);
    let rg = grid.panel_range(grid.panel_of(t));
    lagrange_weights(&grid.nodes[rg.clone()], t)
        .iter()
        .zip(&v[rg])
        .map(|(lw, z)| z * *lw)
        .sum()
}

/// Pointwise left eigenfunction and its tail integral for one mode, found
/// by shifted inverse iteration on the tail operator and normalised so that
/// `int r l = 1` including the mass beyond the upper bound.
fn continuous_left(
    op: &DiscreteOperator,
    tail_op: &Mat<f64>,
    nu: c64,
    r: &[c64],
    r_sup: c64,
    l_disc: &[c64],
) -> Result<(Vec<c64>, Vec<c64>)> {
    let grid = &*op.grid;
    let n = grid.len();
    let Ma1Problem { rho, x, model } = op.problem;
    let shift = nu + c64::new(1e-10 * nu.norm(), 0.0);
    let m = Mat::from_fn(n, n, |i, j| {
        c64::new(tail_op[(i, j)], 0.0) - if i == j { shift } else { c64::new(0.0, 0.0) }
    });
    let lu = m.partial_piv_lu();
    // Start from the step-function tail sums of the discrete vector.
    let mut t: Vec<c64> = grid
        .nodes
        .iter()
        .map(|&c| (0..n).filter(|&i| grid.nodes[i] >= c).map(|i| l_disc[i]).sum())
        .collect();
    for _ in 0..3 {
        let b = Mat::from_fn(n, 1, |i, _| t[i]);
        let sol = faer::prelude::Solve::solve(&lu, &b);
        let norm = (0..n).map(|i| sol[(i, 0)].norm()).fold(0.0, f64::max);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Singular(format!("tail operator solve failed at nu = {nu}")));
        }
        t = (0..n).map(|i| sol[(i, 0)] / norm).collect();
    }
    let mut l: Vec<c64> = grid
        .nodes
        .iter()
        .map(|&z| interp_clamped(grid, &t, x - rho * z) * (rho * model.pdf(x - rho * z)) / nu)
        .collect();
    let l_hi = interp_clamped(grid, &t, grid.bounds.1);
    let s: c64 = (0..n).map(|i| r[i] * l[i] * grid.weights[i]).sum::<c64>() + r_sup * l_hi;
    if s.norm() == 0.0 {
        return Err(Error::Eigensolver(format!("left eigenfunction at nu = {nu} is orthogonal to its right partner")));
    }
    l.iter_mut().for_each(|v| *v /= s);
    t.iter_mut().for_each(|v| *v /= s);
    Ok((l, t))
}

impl SpectralData {
    pub fn modes(&self) -> usize {
        self.nu.len()
    }

    pub fn right_col(&self, j: usize) -> Vec<c64> {
        linalg::col(&self.right, j)
    }

    pub fn left_col(&self, j: usize) -> Vec<c64> {
        linalg::col(&self.left, j)
    }

    /// `sum_j beta_j nu_j^n`.
    pub fn v_spectral(&self, n: usize) -> c64 {
        self.beta
            .iter()
            .zip(&self.nu)
            .map(|(b, v)| b * v.powu(n as u32))
            .sum()
    }

    /// `max_{j,k} |int r_j l_k - delta_jk|` recomputed with the quadrature inner product.
    pub fn biorthogonality_error(&self) -> f64 {
        let w = &self.grid.weights;
        let k = self.modes();
        let mut e: f64 = 0.0;
        for a in 0..k {
            for b in 0..k {
                let g: c64 = (0..w.len()).map(|i| self.left_discrete[(i, a)] * self.right[(i, b)]).sum();
                e = e.max((g - if a == b { 1.0 } else { 0.0 }).norm());
            }
        }
        e
    }
}

/// `beta_j = r_j(inf) int F l_j` and `B = sum_{j <= M} beta_j`.
pub fn beta_weights(spec: &SpectralData) -> (Vec<c64>, c64) {
    let f: Vec<f64> = spec.grid.nodes.iter().map(|&y| spec.problem.model.cdf(y)).collect();
    let beta: Vec<c64> = (0..spec.modes())
        .map(|j| {
            let int_fl: c64 = (0..f.len()).map(|i| spec.left_discrete[(i, j)] * f[i]).sum();
            spec.right_at_sup[j] * int_fl
        })
        .collect();
    let b = beta[..spec.multiplicity.min(beta.len())].iter().sum();
    (beta, b)
}

/// `u_n = Re sum_j beta_j nu_j^n` for positive `rho`.
pub fn u_spectral_pos(spec: &SpectralData, n_max: usize) -> Result<MaxCdfResult> {
    if spec.problem.rho <= 0.0 {
        return Err(Error::InvalidArgument("the direct spectral sum needs rho > 0".into()));
    }
    let t0 = Instant::now();
    let mut u = vec![1.0];
    let mut notes = Vec::new();
    let mut imag: f64 = 0.0;
    let last = spec.nu.last().map(|v| v.norm()).unwrap_or(0.0);
    let mut err = vec![0.0];
    for n in 1..=n_max {
        let s = spec.v_spectral(n);
        imag = imag.max(s.im.abs());
        u.push(s.re);
        err.push(spec.diag.beta_tail * (spec.beta[0] * spec.nu[0]).norm() * last.powi(n as i32 - 1));
    }
    if imag > 1e-6 {
        notes.push(format!("imaginary residue {imag:e} exceeds 1e-6; expansion is ill-conditioned"));
    }
    notes.push(format!("sum of retained beta = {}", spec.diag.sum_beta.re));
    Ok(MaxCdfResult {
        u,
        method: Method::Spectral,
        err: Some(err),
        meta: Meta {
            elapsed_secs: t0.elapsed().as_secs_f64(),
            grid: None,
            notes,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Asymptote {
    pub value: f64,
    /// `|nu_{M+1}| / |nu_1|`.
    pub gap: f64,
    pub multiplicity: usize,
}

/// `B nu_1^n`, summed over the tied dominant block when `M > 1`.
pub fn u_asymptotic_pos(spec: &SpectralData, n: usize) -> Asymptote {
    let m = spec.multiplicity.min(spec.modes());
    let value: c64 = (0..m).map(|j| spec.beta[j] * spec.nu[j].powu(n as u32)).sum();
    let gap = if spec.all_nu.len() > m {
        spec.all_nu[m].norm() / spec.all_nu[0].norm()
    } else {
        0.0
    };
    Asymptote {
        value: value.re,
        gap,
        multiplicity: m,
    }
}

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub nu: f64,
    /// Right vector, `max |r| = 1`.
    pub right: Vec<f64>,
    /// Continuous left function with `int r l = 1`.
    pub left: Vec<f64>,
    pub left_discrete: Vec<f64>,
    pub iterations: usize,
}

fn power_side(a: &Mat<f64>, f0: &[f64], iters: usize, transpose: bool) -> Result<(f64, Vec<f64>, usize)> {
    let norm_inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut x: Vec<f64> = f0.to_vec();
    let s = norm_inf(&x);
    if s == 0.0 {
        return Err(Error::InvalidArgument("starting vector is zero".into()));
    }
    x.iter_mut().for_each(|v| *v /= s);
    let mut nu = 0.0;
    let mut delta = f64::INFINITY;
    for it in 1..=iters {
        let y = if transpose { linalg::matvec_t(a, &x) } else { linalg::matvec(a, &x) };
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let new = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / xx;
        let res = x.iter().zip(&y).map(|(a, b)| (b - new * a).abs()).fold(0.0, f64::max);
        delta = (new - nu).abs();
        nu = new;
        let s = norm_inf(&y);
        if s == 0.0 {
            return Ok((0.0, x, it));
        }
        x = y.iter().map(|v| v / s).collect();
        if it > 2 && res <= 1e-13 * nu.abs().max(f64::MIN_POSITIVE) {
            return Ok((nu, x, it));
        }
    }
    Err(Error::NoConvergence { iters, delta })
}

/// Forward and adjoint power iteration from `f0`.
pub fn power_iteration(op: &DiscreteOperator, f0: &[f64], iters: usize) -> Result<PowerResult> {
    let (nu, mut r, it_r) = power_side(&op.matrix, f0, iters, false)?;
    let (nu_l, mut l, it_l) = power_side(&op.matrix, f0, iters, true)?;
    if (nu - nu_l).abs() > 1e-8 * nu.abs() {
        return Err(Error::NoConvergence { iters, delta: (nu - nu_l).abs() });
    }
    let piv = r.iter().cloned().fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m });
    r.iter_mut().for_each(|v| *v /= piv);
    let s: f64 = l.iter().zip(&r).map(|(a, b)| a * b).sum();
    l.iter_mut().for_each(|v| *v /= s);
    let left = l.iter().zip(&op.grid.weights).map(|(a, w)| a / w).collect();
    Ok(PowerResult {
        nu,
        right: r,
        left,
        left_discrete: l,
        iterations: it_r.max(it_l),
    })
}

/// Removes `nu r(y) l(z)` from the kernel; the spectrum of the result is the
/// original one without `nu`.
pub fn deflate(op: &DiscreteOperator, nu: f64, r: &[f64], l: &[f64]) -> DiscreteOperator {
    let n = op.dim();
    let w = &op.grid.weights;
    let ld: Vec<f64> = l.iter().zip(w).map(|(a, b)| a * b).collect();
    let matrix = Mat::from_fn(n, n, |i, j| op.matrix[(i, j)] - nu * r[i] * ld[j]);
    let r_sup: f64 = op.sup_row.iter().zip(r).map(|(a, b)| a * b).sum();
    let sup_row = op.sup_row.iter().zip(&ld).map(|(a, b)| a - r_sup * b).collect();
    let mut out = DiscreteOperator {
        problem: op.problem,
        grid: op.grid.clone(),
        matrix,
        sup_row,
        norm2sq: 0.0,
    };
    out.norm2sq = out.trace_sq();
    out
}

/// Discretised resolvent kernel: solves `(I - lambda A) X = A`.
pub fn resolvent(op: &DiscreteOperator, lambda: c64) -> Result<Mat<c64>> {
    for nu in linalg::eigvals(&op.matrix)? {
        if nu.norm() > 0.0 {
            let pole = nu.inv();
            let d = (lambda - pole).norm();
            if d < 1e-8 {
                return Err(Error::PoleProximity {
                    lambda: lambda.re,
                    pole: pole.re,
                    distance: d,
                });
            }
        }
    }
    let n = op.dim();
    let a = linalg::to_complex(&op.matrix);
    let m = Mat::from_fn(n, n, |i, j| {
        let id = if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) };
        id - lambda * a[(i, j)]
    });
    Ok(linalg::solve_c(&m, &a))
}

/// `trace(A^r)` for `r = 0 ..= r_max` (index 0 holds the dimension).
pub fn power_sums_trace(op: &DiscreteOperator, r_max: usize) -> Vec<f64> {
    let n = op.dim();
    let half = r_max.div_ceil(2).max(1);
    let mut powers = vec![Mat::<f64>::identity(n, n), op.matrix.clone()];
    for k in 2..=half {
        let next = &powers[k - 1] * &op.matrix;
        powers.push(next);
    }
    (0..=r_max)
        .map(|r| {
            let a = r / 2;
            let b = r - a;
            let (pa, pb) = (&powers[a], &powers[b]);
            (0..n)
                .map(|i| (0..n).map(|j| pa[(i, j)] * pb[(j, i)]).sum::<f64>())
                .sum()
        })
        .collect()
}

/// `sum_j nu_j^r` over the given eigenvalues (index 0 holds their count).
pub fn power_sums_eigen(nu: &[c64], r_max: usize) -> Vec<f64> {
    (0..=r_max)
        .map(|r| nu.iter().map(|v| v.powu(r as u32)).sum::<c64>().re)
        .collect()
}

/// Elementary symmetric functions `e_0 ..= e_K` from power sums
/// `p_1 ..= p_K` by Newton's identities `k e_k = sum_i (-1)^{i-1} e_{k-i} p_i`.
pub fn elementary_from_power_sums(p: &[f64]) -> Vec<f64> {
    let kmax = p.len() - 1;
    let mut e = vec![0.0; kmax + 1];
    e[0] = 1.0;
    for k in 1..=kmax {
        let mut s = 0.0;
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * e[k - i] * p[i];
        }
        e[k] = s / k as f64;
    }
    e
}

/// Coefficients `d_k` of `D(t) = prod (1 - nu_j t) = sum d_k t^k`.
pub fn determinant_coefficients(p: &[f64]) -> Vec<f64> {
    elementary_from_power_sums(p)
        .into_iter()
        .enumerate()
        .map(|(k, e)| if k % 2 == 0 { e } else { -e })
        .collect()
}

/// `[1^3] = (p_1^3 - 3 p_1 p_2 + 2 p_3) / 6`.
pub fn augmented_one_cubed(p1: f64, p2: f64, p3: f64) -> f64 {
    (p1 * p1 * p1 - 3.0 * p1 * p2 + 2.0 * p3) / 6.0
}

/// `D(t) = prod_j (1 - nu_j t)` over the whole discrete spectrum.
pub fn fredholm_determinant(spec: &SpectralData, t: f64) -> f64 {
    spec.all_nu
        .iter()
        .map(|v| c64::new(1.0, 0.0) - v * t)
        .product::<c64>()
        .re
}

#[derive(Debug, Clone)]
pub struct DeterminantSeries {
    /// `D(t)` coefficients.
    pub d: Vec<f64>,
    /// `N(t) = D(t) (1 - t V(t))` coefficients.
    pub n: Vec<f64>,
    pub u: MaxCdfResult,
    /// Reciprocal zeros `w_j` of the truncated `N`, descending modulus.
    pub roots: Vec<c64>,
}

/// `1 + t U(t) = D(t) / N(t)` with `N = D (1 - t V)`; `u_{n-1}` is the
/// `t^n` coefficient of the quotient.
pub fn u_via_determinant_series(
    d: &[f64],
    v: &crate::recurrence::VSequence,
    n_max: usize,
) -> Result<DeterminantSeries> {
    let t0 = Instant::now();
    let deg = n_max + 1;
    if d.len() < deg + 1 || v.v.len() < deg {
        return Err(Error::InvalidArgument(format!(
            "need D to degree {deg} and v_0..v_{n_max}"
        )));
    }
    let one_minus_tv: Vec<f64> = (0..=deg).map(|k| if k == 0 { 1.0 } else { -v.v[k - 1] }).collect();
    let nco: Vec<f64> = (0..=deg)
        .map(|k| (0..=k).map(|i| d[i] * one_minus_tv[k - i]).sum())
        .collect();
    let mut q = vec![0.0; deg + 1];
    for k in 0..=deg {
        let s: f64 = (1..=k).map(|i| nco[i] * q[k - i]).sum();
        q[k] = (d[k] - s) / nco[0];
        if !q[k].is_finite() || q[k].abs() > 1e6 {
            return Err(Error::SeriesInstability(q[k].abs()));
        }
    }
    let roots = reciprocal_roots(&nco)?;
    Ok(DeterminantSeries {
        d: d[..=deg].to_vec(),
        n: nco,
        u: MaxCdfResult {
            u: q[1..].to_vec(),
            method: Method::DeterminantSeries,
            err: None,
            meta: Meta {
                elapsed_secs: t0.elapsed().as_secs_f64(),
                grid: None,
                notes: Vec::new(),
            },
        },
        roots,
    })
}

/// Roots `w` of `sum_k c_k w^{K-k}`, i.e. reciprocals of the zeros of
/// `sum_k c_k t^k`, truncated where coefficients fall to rounding level.
pub fn reciprocal_roots(c: &[f64]) -> Result<Vec<c64>> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut k = c.len() - 1;
    while k > 0 && c[k].abs() <= 1e-14 * scale {
        k -= 1;
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let comp = Mat::from_fn(k, k, |i, j| {
        if i == 0 {
            -c[j + 1] / c[0]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    linalg::eigvals(&comp)
}

/// Residuals of the eigenfunction equations for one mode.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EigenResiduals {
    /// `max |nu r - K r|` with `K` applied by the recurrence quadrature.
    pub integral_right: f64,
    /// `max |nu l(z) - rho f(x - rho z) int_{x - rho z} l| / max |l|`.
    pub integral_left: f64,
    /// `max |nu r'(y) - sign(rho) f(y) r((x - y)/rho)|`.
    pub ode_right: f64,
    /// `max |d/dz [l(z)/f(x - rho z)] - rho^2 l(x - rho z)/nu|`, relative.
    pub ode_left: f64,
    /// `|r(lo)| / max |r|`.
    pub bc_right_lo: f64,
    /// `|l(lo)| / max |l|` for positive `rho`, `|l(hi)| / max |l|` otherwise.
    pub bc_left: f64,
}

fn tail_total(grid: &QuadratureGrid, l: &[c64]) -> c64 {
    (0..grid.len()).map(|i| l[i] * grid.weights[i]).sum()
}

fn interp_c(grid: &QuadratureGrid, v: &[c64], t: f64, above: c64) -> c64 {
    let re: Vec<f64> = v.iter().map(|z| z.re).collect();
    let im: Vec<f64> = v.iter().map(|z| z.im).collect();
    c64::new(grid.interpolate(&re, t, above.re), grid.interpolate(&im, t, above.im))
}

/// Derivative at each node of the containing panel's interpolant.
fn panel_derivative(grid: &QuadratureGrid, v: &[c64]) -> Vec<c64> {
    let mut out = vec![c64::new(0.0, 0.0); v.len()];
    for p in 0..grid.n_panels() {
        let r = grid.panel_range(p);
        let xs = grid.panel_nodes(p);
        for (a, &t) in xs.iter().enumerate() {
            let mut s = c64::new(0.0, 0.0);
            for j in 0..xs.len() {
                let mut dj = 0.0;
                for k in 0..xs.len() {
                    if k == j {
                        continue;
                    }
                    let mut prod = 1.0 / (xs[j] - xs[k]);
                    for m in 0..xs.len() {
                        if m != j && m != k {
                            prod *= (t - xs[m]) / (xs[j] - xs[m]);
                        }
                    }
                    dj += prod;
                }
                s += v[r.start + j] * dj;
            }
            out[r.start + a] = s;
        }
    }
    out
}

pub fn eigen_residuals(spec: &SpectralData, j: usize) -> EigenResiduals {
    let grid = &*spec.grid;
    let Ma1Problem { rho, x, model } = spec.problem;
    let nu = spec.nu[j];
    let r = spec.right_col(j);
    let l = spec.left_col(j);
    let rsup = spec.right_at_sup[j];
    let (lo, hi) = grid.bounds;
    let zero = c64::new(0.0, 0.0);

    let rec = Recurrence::on_grid(spec.problem, spec.grid.clone(), GridSpec::default());
    let part = |f: fn(&c64) -> f64, sup: f64| GFunction {
        grid: spec.grid.clone(),
        values: r.iter().map(f).collect(),
        value_at_sup: sup,
    };
    let kre = rec.apply_k(&part(|z| z.re, rsup.re));
    let kim = rec.apply_k(&part(|z| z.im, rsup.im));
    let integral_right = (0..grid.len())
        .map(|i| (nu * r[i] - c64::new(kre.values[i], kim.values[i])).norm())
        .fold(0.0, f64::max);

    // int_c^inf l = int_c^hi l + L(hi), the last term being the mass of l
    // beyond the grid.
    let tail = linalg::col(&spec.left_tail, j);
    let l_hi = interp_clamped(grid, &tail, hi);
    let lmax = l.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let lre: Vec<f64> = l.iter().map(|z| z.re).collect();
    let lim: Vec<f64> = l.iter().map(|z| z.im).collect();
    let integral_left = grid
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let c = x - rho * z;
            let ire = grid.integrate_fn(|y| grid.interpolate(&lre, y, 0.0), c, hi, &[]);
            let iim = grid.integrate_fn(|y| grid.interpolate(&lim, y, 0.0), c, hi, &[]);
            let above = if c >= hi { interp_clamped(grid, &tail, c) } else { l_hi };
            let upper = if c < lo { tail_total(grid, &l) + l_hi } else { c64::new(ire, iim) + above };
            let rhs = upper * (rho * model.pdf(c));
            (nu * l[i] - rhs).norm() / lmax
        })
        .fold(0.0, f64::max);

    let dr = panel_derivative(grid, &r);
    let ode_right = grid
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let arg = interp_c(grid, &r, (x - y) / rho, rsup);
            (nu * dr[i] - arg * (rho.signum() * model.pdf(y))).norm()
        })
        .fold(0.0, f64::max);

    // l(z) / f(x - rho z) = (rho / nu) L(x - rho z), which avoids dividing
    // by a vanishing density.
    let g: Vec<c64> = grid
        .nodes
        .iter()
        .map(|&z| interp_clamped(grid, &tail, x - rho * z) * rho / nu)
        .collect();
    let dg = panel_derivative(grid, &g);
    let rhs: Vec<c64> = grid
        .nodes
        .iter()
        .map(|&z| interp_c(grid, &l, x - rho * z, zero) * (rho * rho) / nu)
        .collect();
    let scale = rhs.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let ode_left = (0..grid.len())
        .filter(|&i| {
            let c = x - rho * grid.nodes[i];
            c > lo && c < hi
        })
        .map(|i| (dg[i] - rhs[i]).norm())
        .fold(0.0, f64::max)
        / scale.max(f64::MIN_POSITIVE);

    let rmax = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let bc_right_lo = interp_c(grid, &r, lo, rsup).norm() / rmax;
    let bc_left = if rho > 0.0 {
        interp_c(grid, &l, lo, zero).norm() / lmax
    } else {
        interp_c(grid, &l, hi, zero).norm() / lmax
    };
    EigenResiduals {
        integral_right,
        integral_left,
        ode_right,
        ode_left,
        bc_right_lo,
        bc_left,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_identities_small() {
        let nu = [0.5, -0.2, 0.1];
        let p = power_sums_eigen(&nu.map(|v| c64::new(v, 0.0)), 3);
        let d = determinant_coefficients(&p);
        // (1 - .5t)(1 + .2t)(1 - .1t)
        let want = [1.0, -0.4, -0.07, 0.01];
        for k in 0..4 {
            assert!((d[k] - want[k]).abs() < 1e-15, "{k}: {} vs {}", d[k], want[k]);
        }
        assert!((augmented_one_cubed(p[1], p[2], p[3]) - 0.5 * -0.2 * 0.1).abs() < 1e-15);
    }

    #[test]
    fn reciprocal_roots_of_product() {
        let c = [1.0, -0.3, -0.1]; // (1 - .5t)(1 + .2t)
        let r = reciprocal_roots(&c).unwrap();
        assert!((r[0].re - 0.5).abs() < 1e-14 && (r[1].re + 0.2).abs() < 1e-14);
    }
}
