//! Thin wrappers over the dense solvers used by the spectral routes.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{evd_real, evd_scratch, ComputeEigenvectors};
use faer::prelude::*;
use faer::{c64, Mat};

use crate::error::{Error, Result};

/// Eigenvalues with right vectors (`A r = nu r`) and transpose-convention
/// left vectors (`l^T A = nu l^T`), ordered by descending modulus.
#[derive(Debug, Clone)]
pub struct EigPairs {
    pub values: Vec<c64>,
    pub right: Mat<c64>,
    pub left: Mat<c64>,
}

pub fn eig_lr(a: &Mat<f64>) -> Result<EigPairs> {
    let n = a.nrows();
    let mut sre = Mat::<f64>::zeros(n, 1);
    let mut sim = Mat::<f64>::zeros(n, 1);
    let mut ul = Mat::<f64>::zeros(n, n);
    let mut ur = Mat::<f64>::zeros(n, n);
    let par = faer::get_global_parallelism();
    let req = evd_scratch::<f64>(
        n,
        ComputeEigenvectors::Yes,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    );
    let mut buf = MemBuffer::new(req);
    evd_real(
        a.as_ref(),
        sre.col_mut(0).as_diagonal_mut(),
        sim.col_mut(0).as_diagonal_mut(),
        Some(ul.as_mut()),
        Some(ur.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;

    let mut values = vec![c64::new(0.0, 0.0); n];
    let mut right = Mat::<c64>::zeros(n, n);
    let mut left = Mat::<c64>::zeros(n, n);
    let mut j = 0;
    while j < n {
        let im = sim[(j, 0)];
        if im == 0.0 || j + 1 == n {
            values[j] = c64::new(sre[(j, 0)], 0.0);
            for i in 0..n {
                right[(i, j)] = c64::new(ur[(i, j)], 0.0);
                left[(i, j)] = c64::new(ul[(i, j)], 0.0);
            }
            j += 1;
        } else {
            values[j] = c64::new(sre[(j, 0)], im);
            values[j + 1] = c64::new(sre[(j, 0)], -im);
            for i in 0..n {
                let r = c64::new(ur[(i, j)], ur[(i, j + 1)]);
                // Stored left vectors satisfy u^H A = nu u^H.
                let u = c64::new(ul[(i, j)], ul[(i, j + 1)]);
                right[(i, j)] = r;
                right[(i, j + 1)] = r.conj();
                left[(i, j)] = u.conj();
                left[(i, j + 1)] = u;
            }
            j += 2;
        }
    }
    let order = order_by_modulus(&values);
    Ok(EigPairs {
        values: order.iter().map(|&k| values[k]).collect(),
        right: Mat::from_fn(n, n, |i, k| right[(i, order[k])]),
        left: Mat::from_fn(n, n, |i, k| left[(i, order[k])]),
    })
}

/// Indices sorting by descending modulus; conjugate pairs keep the
/// positive-imaginary member first.
pub fn order_by_modulus(values: &[c64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let (va, vb) = (values[a], values[b]);
        let (ma, mb) = (va.norm(), vb.norm());
        if (ma - mb).abs() <= 1e-14 * ma.max(mb) {
            (vb.re, vb.im).partial_cmp(&(va.re, va.im)).unwrap()
        } else {
            mb.partial_cmp(&ma).unwrap()
        }
    });
    idx
}

pub fn eigvals(a: &Mat<f64>) -> Result<Vec<c64>> {
    let mut v = a
        .eigenvalues()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let order = order_by_modulus(&v);
    v = order.iter().map(|&k| v[k]).collect();
    Ok(v)
}

pub fn eigvals_c(a: &Mat<c64>) -> Result<Vec<c64>> {
    let v = a
        .eigenvalues()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let order = order_by_modulus(&v);
    Ok(order.iter().map(|&k| v[k]).collect())
}

pub fn solve_c(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    a.partial_piv_lu().solve(b)
}

pub fn solve_r(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    a.partial_piv_lu().solve(b)
}

/// 2-norm condition number from singular values.
pub fn cond_c(a: &Mat<c64>) -> Result<f64> {
    let s = a
        .singular_values()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

pub fn cond_r(a: &Mat<f64>) -> Result<f64> {
    let s = a
        .singular_values()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

pub fn to_complex(a: &Mat<f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

pub fn matvec_t(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)] * x[i]).sum())
        .collect()
}

pub fn col(a: &Mat<c64>, j: usize) -> Vec<c64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn dot_rc(a: &[f64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| y * *x).sum()
}

pub fn dot_cc(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_and_right_vectors() {
        let n = 6;
        let a = Mat::<f64>::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + (i == j) as u8 as f64 * 0.3);
        let e = eig_lr(&a).unwrap();
        let ac = to_complex(&a);
        for k in 0..n {
            let nu = e.values[k];
            for i in 0..n {
                let ar: c64 = (0..n).map(|j| ac[(i, j)] * e.right[(j, k)]).sum();
                assert!((ar - nu * e.right[(i, k)]).norm() < 1e-12);
                let la: c64 = (0..n).map(|j| e.left[(j, k)] * ac[(j, i)]).sum();
                assert!((la - nu * e.left[(i, k)]).norm() < 1e-12);
            }
        }
        for k in 1..n {
            assert!(e.values[k - 1].norm() >= e.values[k].norm() - 1e-12);
        }
    }
}
