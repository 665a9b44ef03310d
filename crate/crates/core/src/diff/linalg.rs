//! Dense kernels shared by the graph's forward/backward passes and by the
//! numeric inference path. Everything is row-major and single-threaded so
//! results are bitwise reproducible.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, k) = (a.rows(), a.cols());
    let (k2, m) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![0.0; n * m];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::matrix(n, m, out)
}

/// Largest asymmetry `|a_ij - a_ji|`, with its location.
pub fn asymmetry(a: &Tensor) -> (usize, usize, f64) {
    let n = a.rows();
    let mut worst = (0, 0, 0.0);
    for i in 0..n {
        for j in 0..i {
            let gap = (a.at(i, j) - a.at(j, i)).abs();
            if gap > worst.2 {
                worst = (i, j, gap);
            }
        }
    }
    worst
}

/// Symmetry tolerance used by every Cholesky entry point: 1e-10, scaled up
/// only when the matrix entries themselves exceed one in magnitude.
pub fn check_symmetric(a: &Tensor) -> Result<()> {
    if a.shape().len() != 2 || a.rows() != a.cols() {
        return Err(Error::shape("cholesky", format!("{:?} is not square", a.shape())));
    }
    let (row, col, gap) = asymmetry(a);
    let tol = 1e-10 * a.max_abs().max(1.0);
    if gap > tol {
        return Err(Error::Asymmetric { row, col, gap });
    }
    Ok(())
}

/// Lower Cholesky factor of the symmetric part of `a`.
pub fn cholesky(a: &Tensor) -> Result<Tensor> {
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let aij = 0.5 * (a.at(i, j) + a.at(j, i));
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
            let s = aij - dot;
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Tensor::matrix(n, n, l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = l.rows();
    if b.rows() != n {
        return Err(Error::shape(
            "triangular_solve",
            format!("{:?} \\ {:?}", l.shape(), b.shape()),
        ));
    }
    let m = b.cols();
    let mut x = b.data().to_vec();
    let ld = l.data();
    for i in 0..n {
        for k in 0..i {
            let lik = ld[i * n + k];
            if lik == 0.0 {
                continue;
            }
            let (head, tail) = x.split_at_mut(i * m);
            let xk = &head[k * m..(k + 1) * m];
            for (xi, &xv) in tail[..m].iter_mut().zip(xk) {
                *xi -= lik * xv;
            }
        }
        let d = ld[i * n + i];
        for xi in &mut x[i * m..(i + 1) * m] {
            *xi /= d;
        }
    }
    Tensor::matrix(n, m, x)
}

/// Solves `Lᵀ X = B` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = l.rows();
    if b.rows() != n {
        return Err(Error::shape(
            "triangular_solve",
            format!("{:?}ᵀ \\ {:?}", l.shape(), b.shape()),
        ));
    }
    let m = b.cols();
    let mut x = b.data().to_vec();
    let ld = l.data();
    for i in (0..n).rev() {
        let d = ld[i * n + i];
        for xi in &mut x[i * m..(i + 1) * m] {
            *xi /= d;
        }
        // row i of L holds column i of Lᵀ: eliminate x_i from rows k < i.
        let (head, tail) = x.split_at_mut(i * m);
        let xi = &tail[..m];
        for k in 0..i {
            let lik = ld[i * n + k];
            if lik == 0.0 {
                continue;
            }
            for (xk, &xv) in head[k * m..(k + 1) * m].iter_mut().zip(xi) {
                *xk -= lik * xv;
            }
        }
    }
    Tensor::matrix(n, m, x)
}

/// Zeroes the strict upper triangle in place.
pub fn tril_in_place(a: &mut Tensor) {
    let n = a.cols();
    let d = a.data_mut();
    let rows = d.len() / n.max(1);
    for i in 0..rows {
        for j in (i + 1)..n {
            d[i * n + j] = 0.0;
        }
    }
}
