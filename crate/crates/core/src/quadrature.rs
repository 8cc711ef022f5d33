//! Composite Gauss–Legendre quadrature on a truncated interval.

use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub lo: f64,
    pub hi: f64,
    pub order: usize,
}

/// Uniform panels, each carrying the same Gauss–Legendre rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub panels: Vec<Panel>,
    pub bounds: (f64, f64),
    /// Reference rule on `[-1, 1]`.
    pub ref_nodes: Vec<f64>,
    pub ref_weights: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Newton on P_n from the Chebyshev-like initial guess.
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            dp = d;
            let step = p / d;
            t -= step;
            if step.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, t);
                dp = d;
                break;
            }
        }
        x[n - 1 - i] = t;
        w[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Lagrange basis values of `xs` at `t`.
pub fn lagrange_weights(xs: &[f64], t: f64) -> Vec<f64> {
    let mut out = vec![1.0; xs.len()];
    for (j, o) in out.iter_mut().enumerate() {
        for (k, &xk) in xs.iter().enumerate() {
            if k != j {
                *o *= (t - xk) / (xs[j] - xk);
            }
        }
    }
    out
}

pub fn build_grid(bounds: (f64, f64), panels: usize, order: usize) -> Result<QuadratureGrid> {
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "grid bounds must be finite with lo < hi, got ({lo}, {hi})"
        )));
    }
    if panels == 0 {
        return Err(Error::InvalidArgument("at least one panel is required".into()));
    }
    if !(2..=32).contains(&order) {
        return Err(Error::InvalidArgument(format!(
            "panel order must lie in [2, 32], got {order}"
        )));
    }
    let (rx, rw) = gauss_legendre(order);
    let h = (hi - lo) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    let mut list = Vec::with_capacity(panels);
    for p in 0..panels {
        let a = lo + p as f64 * h;
        let b = if p + 1 == panels { hi } else { lo + (p + 1) as f64 * h };
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        for k in 0..order {
            nodes.push(c + r * rx[k]);
            weights.push(r * rw[k]);
        }
        list.push(Panel { lo: a, hi: b, order });
    }
    Ok(QuadratureGrid {
        nodes,
        weights,
        panels: list,
        bounds,
        ref_nodes: rx,
        ref_weights: rw,
    })
}

pub fn integrate(grid: &QuadratureGrid, fvals: &[f64]) -> Result<f64> {
    grid.integrate(fvals)
}

pub fn refine(grid: &QuadratureGrid) -> QuadratureGrid {
    grid.refine()
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn order(&self) -> usize {
        self.ref_nodes.len()
    }

    pub fn n_panels(&self) -> usize {
        self.panels.len()
    }

    pub fn integrate(&self, fvals: &[f64]) -> Result<f64> {
        if fvals.len() != self.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                self.nodes.len(),
                fvals.len()
            )));
        }
        Ok(self.weights.iter().zip(fvals).map(|(w, f)| w * f).sum())
    }

    /// Same bounds and order, twice the panels.
    pub fn refine(&self) -> QuadratureGrid {
        build_grid(self.bounds, 2 * self.n_panels(), self.order())
            .expect("refining a valid grid keeps it valid")
    }

    /// Index range of the nodes belonging to panel `p`.
    pub fn panel_range(&self, p: usize) -> Range<usize> {
        let m = self.order();
        p * m..(p + 1) * m
    }

    pub fn panel_nodes(&self, p: usize) -> &[f64] {
        &self.nodes[self.panel_range(p)]
    }

    /// Panel containing `t`, clamped to the first/last panel.
    pub fn panel_of(&self, t: f64) -> usize {
        let (lo, hi) = self.bounds;
        let h = (hi - lo) / self.n_panels() as f64;
        (((t - lo) / h).floor().max(0.0) as usize).min(self.n_panels() - 1)
    }

    /// Gauss rule of this grid's order mapped onto `[a, b]`.
    pub fn rule_on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        self.ref_nodes
            .iter()
            .zip(&self.ref_weights)
            .map(move |(x, w)| (c + r * x, r * w))
    }

    /// Interpolates node values at `t` with the containing panel's
    /// polynomial. Below the grid the value is zero, above it `above`.
    pub fn interpolate(&self, values: &[f64], t: f64, above: f64) -> f64 {
        let (lo, hi) = self.bounds;
        if t < lo {
            return 0.0;
        }
        if t > hi {
            return above;
        }
        let p = self.panel_of(t);
        let r = self.panel_range(p);
        lagrange_weights(&self.nodes[r.clone()], t)
            .iter()
            .zip(&values[r])
            .map(|(l, v)| l * v)
            .sum()
    }

    /// Integral of `f` over `[a, b]` (clipped to the grid bounds) using the
    /// panel structure, with extra break points honoured.
    pub fn integrate_fn<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, breaks: &[f64]) -> f64 {
        let (lo, hi) = self.bounds;
        let (a, b) = (a.max(lo), b.min(hi));
        if a >= b {
            return 0.0;
        }
        let mut cuts: Vec<f64> = self
            .panels
            .iter()
            .map(|p| p.lo)
            .chain(std::iter::once(hi))
            .chain(breaks.iter().copied())
            .filter(|&c| c > a && c < b)
            .collect();
        cuts.push(a);
        cuts.push(b);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2)
            .map(|s| self.rule_on(s[0], s[1]).map(|(t, w)| w * f(t)).sum::<f64>())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl2_nodes() {
        let g = build_grid((0.0, 1.0), 1, 2).unwrap();
        let d = 1.0 / (2.0 * 3f64.sqrt());
        assert!((g.nodes[0] - (0.5 - d)).abs() < 1e-15);
        assert!((g.nodes[1] - (0.5 + d)).abs() < 1e-15);
        assert!((g.weights[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let g = build_grid((-1.0, 3.0), 5, 6).unwrap();
        let v: Vec<f64> = g.nodes.iter().map(|z| z.powi(5) - 2.0 * z).collect();
        for t in [-0.9f64, 0.0, 1.234, 2.99] {
            let want: f64 = t.powi(5) - 2.0 * t;
            assert!((g.interpolate(&v, t, 0.0) - want).abs() < 1e-11);
        }
        assert_eq!(g.interpolate(&v, -2.0, 7.0), 0.0);
        assert_eq!(g.interpolate(&v, 4.0, 7.0), 7.0);
    }

    #[test]
    fn bad_arguments() {
        assert!(build_grid((1.0, 0.0), 4, 8).is_err());
        assert!(build_grid((0.0, 1.0), 0, 8).is_err());
        assert!(build_grid((0.0, 1.0), 4, 40).is_err());
        let g = build_grid((0.0, 1.0), 2, 4).unwrap();
        assert!(g.integrate(&[1.0; 3]).is_err());
    }
}
