//! Exact `u_n = P(M_n <= x)` by repeated application of the integral operator
//!
//! `K r(y) = sign(rho) * integral_{-inf}^{y} r((x - w) / rho) f(w) dw`
//!
//! to functions sampled on a quadrature grid, plus the Bell-polynomial
//! convolution route for negative `rho`.

use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::innovations::InnovationModel;
use crate::quadrature::{build_grid, lagrange_weights, QuadratureGrid};

/// One instance `(rho, x, F)` of the maximum-distribution problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ma1Problem {
    pub rho: f64,
    pub x: f64,
    pub model: InnovationModel,
}

impl Ma1Problem {
    pub fn new(rho: f64, x: f64, model: InnovationModel) -> Result<Self> {
        if rho == 0.0 {
            return Err(Error::InvalidArgument(
                "rho = 0 has no kernel; use the i.i.d. reference F(x)^n".into(),
            ));
        }
        if !rho.is_finite() || !x.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rho and x must be finite, got rho = {rho}, x = {x}"
            )));
        }
        Ok(Self { rho, x, model })
    }

    pub fn sign(&self) -> f64 {
        self.rho.signum()
    }

    /// Quadrature grid over the model's truncation bounds.
    pub fn grid(&self, spec: &GridSpec) -> Result<QuadratureGrid> {
        let bounds = self.model.truncation_bounds(spec.tail_eps)?;
        build_grid(bounds, spec.panels, spec.order)
    }
}

/// Grid construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub panels: usize,
    pub order: usize,
    pub tail_eps: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            panels: 64,
            order: 8,
            tail_eps: 1e-12,
        }
    }
}

impl GridSpec {
    pub fn doubled(&self) -> Self {
        Self {
            panels: 2 * self.panels,
            ..*self
        }
    }
}

/// Samples of `G(y)` at the grid nodes, plus `G(inf)` realised at the upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct GFunction {
    pub grid: Arc<QuadratureGrid>,
    pub values: Vec<f64>,
    pub value_at_sup: f64,
}

impl GFunction {
    pub fn at(&self, t: f64) -> f64 {
        self.grid.interpolate(&self.values, t, self.value_at_sup)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VSequence {
    /// `v_0 ..= v_N`.
    pub v: Vec<f64>,
    /// `w_n = v_{n-1}`, `w_0 = 0`.
    pub w: Vec<f64>,
}

impl VSequence {
    pub fn from_v(v: Vec<f64>) -> Self {
        let mut w = vec![0.0];
        w.extend_from_slice(&v);
        Self { v, w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Recurrence,
    Bell,
    Spectral,
    DeltaGamma,
    DeterminantSeries,
    MonteCarlo,
    Asymptotic,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Recurrence => "recurrence",
            Self::Bell => "bell",
            Self::Spectral => "spectral",
            Self::DeltaGamma => "delta-gamma",
            Self::DeterminantSeries => "determinant-series",
            Self::MonteCarlo => "montecarlo",
            Self::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta {
    pub elapsed_secs: f64,
    pub grid: Option<GridSpec>,
    pub notes: Vec<String>,
}

/// `u_0 ..= u_N` from one route.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxCdfResult {
    pub u: Vec<f64>,
    pub method: Method,
    pub err: Option<Vec<f64>>,
    pub meta: Meta,
}

#[derive(Debug, Clone)]
enum Stencil {
    Zero,
    Above,
    Panel(usize, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Sample {
    weight: f64,
    stencil: Stencil,
}

fn eval_samples(samples: &[Sample], grid: &QuadratureGrid, g: &[f64], sup: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            s.weight
                * match &s.stencil {
                    Stencil::Zero => 0.0,
                    Stencil::Above => sup,
                    Stencil::Panel(p, l) => {
                        let r = grid.panel_range(*p);
                        l.iter().zip(&g[r]).map(|(a, b)| a * b).sum()
                    }
                }
        })
        .sum()
}

/// Precomputed quadrature for `K` in the `w` variable. Because the operator
/// is linear in `g`, all interpolation stencils are fixed once per problem.
#[derive(Debug, Clone)]
pub struct Recurrence {
    pub problem: Ma1Problem,
    pub grid: Arc<QuadratureGrid>,
    pub spec: GridSpec,
    segments: Vec<Vec<Sample>>,
    /// Per node: number of whole segments below it and the partial segment.
    partial: Vec<(usize, Vec<Sample>)>,
    sup: (usize, Vec<Sample>),
}

impl Recurrence {
    pub fn new(problem: Ma1Problem, spec: GridSpec) -> Result<Self> {
        let grid = Arc::new(problem.grid(&spec)?);
        Ok(Self::on_grid(problem, grid, spec))
    }

    pub fn on_grid(problem: Ma1Problem, grid: Arc<QuadratureGrid>, spec: GridSpec) -> Self {
        let (lo, hi) = grid.bounds;
        let Ma1Problem { rho, x, model } = problem;
        let (slo, shi) = model.support();
        // Break points: panel edges, support edges, and the images of the grid
        // bounds under w -> (x - w)/rho where the clamped integrand kinks.
        let mut cuts: Vec<f64> = grid
            .panels
            .iter()
            .map(|p| p.lo)
            .chain([hi, slo, shi, x - rho * lo, x - rho * hi])
            .filter(|c| c.is_finite() && *c >= lo && *c <= hi)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * (1.0 + b.abs()));

        let sign = rho.signum();
        let sample = |a: f64, b: f64| -> Vec<Sample> {
            if b <= a {
                return Vec::new();
            }
            grid.rule_on(a, b)
                .map(|(w, q)| {
                    let z = (x - w) / rho;
                    let stencil = if z < lo {
                        Stencil::Zero
                    } else if z > hi {
                        Stencil::Above
                    } else {
                        let p = grid.panel_of(z);
                        Stencil::Panel(p, lagrange_weights(grid.panel_nodes(p), z))
                    };
                    Sample {
                        weight: sign * q * model.pdf(w),
                        stencil,
                    }
                })
                .collect()
        };
        let segments: Vec<Vec<Sample>> = cuts.windows(2).map(|s| sample(s[0], s[1])).collect();
        let locate = |y: f64| -> (usize, Vec<Sample>) {
            // Number of segments lying wholly below y.
            let k = cuts.partition_point(|&c| c <= y).saturating_sub(1);
            let k = k.min(segments.len());
            let start = cuts[k.min(cuts.len() - 1)];
            (k, sample(start, y))
        };
        let partial = grid.nodes.iter().map(|&y| locate(y)).collect();
        let sup = (segments.len(), Vec::new());
        Self {
            problem,
            grid,
            spec,
            segments,
            partial,
            sup,
        }
    }

    /// `G_0 = F` on the grid with `G_0(inf) = 1`.
    pub fn initial(&self) -> GFunction {
        GFunction {
            grid: self.grid.clone(),
            values: self.grid.nodes.iter().map(|&y| self.problem.model.cdf(y)).collect(),
            value_at_sup: 1.0,
        }
    }

    pub fn apply_k(&self, g: &GFunction) -> GFunction {
        let grid = &*self.grid;
        let seg: Vec<f64> = self
            .segments
            .iter()
            .map(|s| eval_samples(s, grid, &g.values, g.value_at_sup))
            .collect();
        let mut cum = Vec::with_capacity(seg.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for s in &seg {
            acc += s;
            cum.push(acc);
        }
        let values = self
            .partial
            .iter()
            .map(|(k, s)| cum[*k] + eval_samples(s, grid, &g.values, g.value_at_sup))
            .collect();
        let value_at_sup =
            cum[self.sup.0] + eval_samples(&self.sup.1, grid, &g.values, g.value_at_sup);
        GFunction {
            grid: self.grid.clone(),
            values,
            value_at_sup,
        }
    }

    /// `v_0 = 1`, `v_n = [K^n F](inf)`.
    pub fn compute_v(&self, n_max: usize) -> VSequence {
        let mut v = Vec::with_capacity(n_max + 1);
        v.push(1.0);
        let mut g = self.initial();
        for _ in 0..n_max {
            g = self.apply_k(&g);
            v.push(g.value_at_sup);
        }
        VSequence::from_v(v)
    }

    pub fn u_exact(&self, n_max: usize) -> Result<MaxCdfResult> {
        if n_max < 1 {
            return Err(Error::InvalidArgument("n_max must be at least 1".into()));
        }
        let t0 = Instant::now();
        let v = self.compute_v(n_max);
        let u = u_from_v(&v.v, self.problem.rho);
        let err = (0..=n_max).map(|n| 2.0 * n as f64 * self.spec.tail_eps).collect();
        Ok(MaxCdfResult {
            u,
            method: Method::Recurrence,
            err: Some(err),
            meta: Meta {
                elapsed_secs: t0.elapsed().as_secs_f64(),
                grid: Some(self.spec),
                notes: Vec::new(),
            },
        })
    }
}

/// `u_n = v_n` for positive `rho`; otherwise the compensated convolution
/// `u_{n+1} = v_{n+1} + sum_{i<=n} v_i u_{n-i}` with `u_0 = 1`.
pub fn u_from_v(v: &[f64], rho: f64) -> Vec<f64> {
    let n_max = v.len() - 1;
    if rho > 0.0 {
        let mut u = v.to_vec();
        u[0] = 1.0;
        return u;
    }
    let mut u = vec![0.0; n_max + 1];
    u[0] = 1.0;
    for n in 0..n_max {
        let (mut s, mut c) = (v[n + 1], 0.0);
        for i in 0..=n {
            let y = v[i] * u[n - i] - c;
            let t = s + y;
            c = (t - s) - y;
            s = t;
        }
        u[n + 1] = s;
    }
    u
}

/// `K g` for a sampled function; builds the quadrature plan on `g`'s grid.
pub fn apply_k(problem: &Ma1Problem, g: &GFunction) -> GFunction {
    Recurrence::on_grid(*problem, g.grid.clone(), GridSpec::default()).apply_k(g)
}

pub fn compute_v(problem: &Ma1Problem, n_max: usize) -> Result<VSequence> {
    Ok(Recurrence::new(*problem, GridSpec::default())?.compute_v(n_max))
}

pub fn u_exact(problem: &Ma1Problem, n_max: usize) -> Result<MaxCdfResult> {
    Recurrence::new(*problem, GridSpec::default())?.u_exact(n_max)
}

/// Complete ordinary Bell polynomials `b_n = sum_{k=1}^n w_k b_{n-k}`,
/// `b_0 = 1`, returned as `u_{n-1} = b_n` for `n = 1 ..= n_max + 1`.
pub fn bell_u(v: &VSequence, n_max: usize) -> Result<MaxCdfResult> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    if v.w.len() < n_max + 2 {
        return Err(Error::InvalidArgument(format!(
            "need v_0..v_{n_max}, got {} terms",
            v.v.len()
        )));
    }
    let t0 = Instant::now();
    let mut b = vec![0.0; n_max + 2];
    b[0] = 1.0;
    for n in 1..=n_max + 1 {
        b[n] = (1..=n).map(|k| v.w[k] * b[n - k]).sum();
    }
    Ok(MaxCdfResult {
        u: b[1..].to_vec(),
        method: Method::Bell,
        err: None,
        meta: Meta {
            elapsed_secs: t0.elapsed().as_secs_f64(),
            ..Meta::default()
        },
    })
}

/// Independence baseline `F(x)^n`.
pub fn u_iid_reference(model: &InnovationModel, x: f64, n: usize) -> f64 {
    model.cdf(x).powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_zero_rejected() {
        assert!(Ma1Problem::new(0.0, 1.0, InnovationModel::Normal).is_err());
    }

    #[test]
    fn zero_function_maps_to_zero() {
        let p = Ma1Problem::new(0.5, 1.0, InnovationModel::Normal).unwrap();
        let r = Recurrence::new(p, GridSpec { panels: 8, order: 6, tail_eps: 1e-10 }).unwrap();
        let g = GFunction {
            grid: r.grid.clone(),
            values: vec![0.0; r.grid.len()],
            value_at_sup: 0.0,
        };
        let k = r.apply_k(&g);
        assert!(k.values.iter().all(|v| *v == 0.0));
        assert_eq!(k.value_at_sup, 0.0);
    }

    #[test]
    fn bell_small_cases() {
        let v = VSequence::from_v(vec![1.0, -0.3, -0.1, -0.05]);
        let u = bell_u(&v, 3).unwrap().u;
        assert_eq!(u[0], 1.0);
        assert!((u[1] - (1.0 - 0.3)).abs() < 1e-15);
        assert!((u[2] - (-0.1 + 2.0 * -0.3 + 1.0)).abs() < 1e-15);
    }
}
