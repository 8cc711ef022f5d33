//! Innovation distributions driving the moving average.
//!
//! Every model exposes its cdf, density, analytic derivatives of the density
//! and of the reciprocal density, quantiles and support. Models are plain
//! values and can be shared freely between threads.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Highest derivative order served analytically.
pub const MAX_DERIVATIVE_ORDER: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnovationModel {
    /// Standard normal.
    Normal,
    /// `F(y) = a e^{a y}` on `(-inf, 0]` with density `a^2 e^{a y}`; atom of mass `1 - a` at zero.
    ExpLeft { a: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Standard Gumbel, `F(y) = exp(-e^{-y})`.
    Gumbel,
}

impl InnovationModel {
    pub fn exp_left(a: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "expleft requires 0 < a <= 1, got {a}"
            )));
        }
        Ok(Self::ExpLeft { a })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "uniform requires finite lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Normal | Self::Gumbel => (f64::NEG_INFINITY, f64::INFINITY),
            Self::ExpLeft { .. } => (f64::NEG_INFINITY, 0.0),
            Self::Uniform { lo, hi } => (lo, hi),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match *self {
            Self::Normal => 0.5 * erfc(-y / SQRT_2),
            Self::ExpLeft { a } => {
                if y >= 0.0 {
                    1.0
                } else {
                    a * (a * y).exp()
                }
            }
            Self::Uniform { lo, hi } => ((y - lo) / (hi - lo)).clamp(0.0, 1.0),
            Self::Gumbel => (-(-y).exp()).exp(),
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        match *self {
            Self::Normal => (-0.5 * y * y).exp() / (2.0 * PI).sqrt(),
            Self::ExpLeft { a } => {
                if y > 0.0 {
                    0.0
                } else {
                    a * a * (a * y).exp()
                }
            }
            Self::Uniform { lo, hi } => {
                if y < lo || y > hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            Self::Gumbel => {
                let t = (-y).exp();
                if t.is_infinite() {
                    0.0
                } else {
                    (-y - t).exp()
                }
            }
        }
    }

    /// Inverse cdf. For the left-exponential model probabilities at or above
    /// the atom map to zero.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Self::Normal => {
                // One Newton step against the accurate cdf; the rational
                // inverse alone is good to about 1e-10.
                let y = -SQRT_2 * erfc_inv(2.0 * p);
                let f = self.pdf(y);
                if f > 0.0 {
                    y - (self.cdf(y) - p) / f
                } else {
                    y
                }
            }
            Self::ExpLeft { a } => {
                if p >= a {
                    0.0
                } else {
                    (p / a).ln() / a
                }
            }
            Self::Uniform { lo, hi } => lo + p * (hi - lo),
            Self::Gumbel => -(-p.ln()).ln(),
        }
    }

    /// `i`-th derivative of the density at `y`.
    pub fn pdf_deriv(&self, y: f64, i: usize) -> Result<f64> {
        self.check_order(i)?;
        Ok(match *self {
            Self::Normal => {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * hermite_he(i, y) * self.pdf(y)
            }
            Self::ExpLeft { a } => a.powi(i as i32) * self.pdf(y),
            Self::Uniform { .. } => {
                if i == 0 {
                    self.pdf(y)
                } else {
                    0.0
                }
            }
            Self::Gumbel => {
                let g = gumbel_log_density_derivs(y, i);
                exp_derivs(self.pdf(y), &g)[i]
            }
        })
    }

    /// `j`-th derivative of `e(y) = 1 / f(y)`; infinite off the support.
    pub fn recip_pdf_deriv(&self, y: f64, j: usize) -> Result<f64> {
        self.check_order(j)?;
        let f = self.pdf(y);
        if f == 0.0 {
            return Ok(if j == 0 { f64::INFINITY } else { f64::NAN });
        }
        Ok(match *self {
            Self::Normal => modified_hermite(j, y) / f,
            Self::ExpLeft { a } => (-a).powi(j as i32) / f,
            Self::Uniform { .. } => {
                if j == 0 {
                    1.0 / f
                } else {
                    0.0
                }
            }
            Self::Gumbel => {
                let h: Vec<f64> = gumbel_log_density_derivs(y, j).iter().map(|v| -v).collect();
                exp_derivs(1.0 / f, &h)[j]
            }
        })
    }

    /// `(quantile(eps), quantile(1 - eps))` clipped to the support.
    pub fn truncation_bounds(&self, eps: f64) -> Result<(f64, f64)> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "tail mass must lie in (0, 0.5), got {eps}"
            )));
        }
        let (slo, shi) = self.support();
        let lo = self.quantile(eps).max(slo);
        let hi = match *self {
            // The upper quantile sits on the atom; the support edge is the bound.
            Self::ExpLeft { .. } => 0.0,
            _ => self.quantile(1.0 - eps).min(shi),
        };
        Ok((lo, hi))
    }

    fn check_order(&self, order: usize) -> Result<()> {
        if order > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedOrder {
                model: self.name(),
                order,
            });
        }
        Ok(())
    }
}

impl fmt::Display for InnovationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Normal => write!(f, "normal"),
            Self::ExpLeft { a } => write!(f, "expleft:a={a}"),
            Self::Uniform { lo, hi } => write!(f, "uniform:lo={lo},hi={hi}"),
            Self::Gumbel => write!(f, "gumbel"),
        }
    }
}

impl FromStr for InnovationModel {
    type Err = Error;

    /// Parses `normal`, `gumbel`, `expleft:a=<f>` and `uniform:lo=<f>,hi=<f>`.
    fn from_str(s: &str) -> Result<Self> {
        let (id, params) = match s.split_once(':') {
            Some((id, p)) => (id.trim(), p.trim()),
            None => (s.trim(), ""),
        };
        let mut a = None;
        let mut lo = None;
        let mut hi = None;
        for kv in params.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("model parameter `{kv}` is not key=value"))
            })?;
            let v: f64 = v.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("model parameter `{kv}` is not numeric"))
            })?;
            match k.trim() {
                "a" => a = Some(v),
                "lo" => lo = Some(v),
                "hi" => hi = Some(v),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown model parameter `{other}`"
                    )))
                }
            }
        }
        let no_params = a.is_none() && lo.is_none() && hi.is_none();
        match id {
            "normal" if no_params => Ok(Self::Normal),
            "gumbel" if no_params => Ok(Self::Gumbel),
            "expleft" if lo.is_none() && hi.is_none() => Self::exp_left(a.unwrap_or(1.0)),
            "uniform" if a.is_none() => Self::uniform(lo.unwrap_or(0.0), hi.unwrap_or(1.0)),
            _ => Err(Error::InvalidArgument(format!("unknown model `{s}`"))),
        }
    }
}

pub fn eval_cdf(model: &InnovationModel, y: f64) -> f64 {
    model.cdf(y)
}

pub fn pdf_derivative(model: &InnovationModel, y: f64, i: usize) -> Result<f64> {
    model.pdf_deriv(y, i)
}

pub fn truncation_bounds(model: &InnovationModel, eps: f64) -> Result<(f64, f64)> {
    model.truncation_bounds(eps)
}

/// `j`-th derivative of `1/phi` at `y`, equal to `H*_j(y) / phi(y)`.
pub fn recip_pdf_derivative_normal(y: f64, j: usize) -> f64 {
    modified_hermite(j, y) / InnovationModel::Normal.pdf(y)
}

/// Probabilists' Hermite polynomial `He_n(y)`.
pub fn hermite_he(n: usize, y: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = y * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H*_j(y) = E (y + Z)^j` for standard normal `Z`, via `H*_{j+1} = y H*_j + j H*_{j-1}`.
pub fn modified_hermite(j: usize, y: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..j {
        let next = y * cur + k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Derivatives `g^{(0..=n)}` of the Gumbel log density `g(y) = -y - e^{-y}`.
fn gumbel_log_density_derivs(y: f64, n: usize) -> Vec<f64> {
    let t = (-y).exp();
    (0..=n)
        .map(|k| match k {
            0 => -y - t,
            1 => -1.0 + t,
            _ if k % 2 == 0 => -t,
            _ => t,
        })
        .collect()
}

/// Derivatives of `exp(g)` from those of `g`:
/// `D^{m+1} e^g = sum_k C(m,k) g^{(k+1)} D^{m-k} e^g`.
fn exp_derivs(value: f64, g: &[f64]) -> Vec<f64> {
    let n = g.len() - 1;
    let mut out = vec![0.0; n + 1];
    out[0] = value;
    for m in 0..n {
        let mut c = 1.0;
        let mut s = 0.0;
        for k in 0..=m {
            s += c * g[k + 1] * out[m - k];
            c = c * (m - k) as f64 / (k + 1) as f64;
        }
        out[m + 1] = s;
    }
    out
}
