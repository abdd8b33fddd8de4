//! Dense linear algebra on flat row-major matrices.
//!
//! Only what the solvers need: LU with partial pivoting, Cholesky, a cyclic
//! Jacobi eigensolver for symmetric matrices, and shifted inverse iteration
//! used as an independent cross-check on extremal eigenpairs.

use crate::error::{Error, Result};

#[inline]
pub fn idx(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

/// LU factorization with partial pivoting, stored in place.
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &[f64], n: usize) -> Result<Lu> {
        assert_eq!(a.len(), n * n);
        let mut lu = a.to_vec();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pmax = k;
            let mut vmax = lu[idx(n, k, k)].abs();
            for i in k + 1..n {
                let v = lu[idx(n, i, k)].abs();
                if v > vmax {
                    vmax = v;
                    pmax = i;
                }
            }
            if vmax == 0.0 || !vmax.is_finite() {
                return Err(Error::Solver("singular matrix in LU factorization".into()));
            }
            if pmax != k {
                for j in 0..n {
                    lu.swap(idx(n, k, j), idx(n, pmax, j));
                }
                piv.swap(k, pmax);
            }
            let pivot = lu[idx(n, k, k)];
            for i in k + 1..n {
                let factor = lu[idx(n, i, k)] / pivot;
                lu[idx(n, i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[idx(n, i, j)] -= factor * lu[idx(n, k, j)];
                    }
                }
            }
        }
        Ok(Lu { n, lu, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[idx(n, i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[idx(n, i, j)] * x[j];
            }
            x[i] = s / self.lu[idx(n, i, i)];
        }
        x
    }
}

/// Cholesky factor `L` (lower) of a symmetric positive definite matrix.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[idx(n, i, j)];
            for k in 0..j {
                s -= l[idx(n, i, k)] * l[idx(n, j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Solver(format!(
                        "matrix not positive definite (pivot {s} at {i})"
                    )));
                }
                l[idx(n, i, i)] = s.sqrt();
            } else {
                l[idx(n, i, j)] = s / l[idx(n, j, j)];
            }
        }
    }
    Ok(l)
}

/// Solve `L y = b` with `L` lower triangular.
pub fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for j in 0..i {
            s -= l[idx(n, i, j)] * y[j];
        }
        y[i] = s / l[idx(n, i, i)];
    }
    y
}

/// Solve `L^T x = b` with `L` lower triangular.
pub fn backward_sub_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= l[idx(n, j, i)] * x[j];
        }
        x[i] = s / l[idx(n, i, i)];
    }
    x
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
///
/// Returns eigenvalues ascending and the matching eigenvectors as columns of
/// a flat row-major matrix.
pub fn jacobi_eigen(a_in: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert_eq!(a_in.len(), n * n);
    let mut a = a_in.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[idx(n, i, i)] = 1.0;
    }
    let fro: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[idx(n, i, j)] * a[idx(n, i, j)];
            }
        }
        if off.sqrt() <= 1e-14 * fro {
            let mut eigs: Vec<(f64, usize)> =
                (0..n).map(|i| (a[idx(n, i, i)], i)).collect();
            eigs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            let vals: Vec<f64> = eigs.iter().map(|e| e.0).collect();
            let mut vecs = vec![0.0; n * n];
            for (new_col, &(_, old_col)) in eigs.iter().enumerate() {
                for r in 0..n {
                    vecs[idx(n, r, new_col)] = v[idx(n, r, old_col)];
                }
            }
            return Ok((vals, vecs));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[idx(n, p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[idx(n, p, p)];
                let aqq = a[idx(n, q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[idx(n, k, p)];
                    let akq = a[idx(n, k, q)];
                    a[idx(n, k, p)] = c * akp - s * akq;
                    a[idx(n, k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(n, p, k)];
                    let aqk = a[idx(n, q, k)];
                    a[idx(n, p, k)] = c * apk - s * aqk;
                    a[idx(n, q, k)] = s * apk + c * aqk;
                }
                a[idx(n, p, q)] = 0.0;
                a[idx(n, q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[idx(n, k, p)];
                    let vkq = v[idx(n, k, q)];
                    v[idx(n, k, p)] = c * vkp - s * vkq;
                    v[idx(n, k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::Solver("Jacobi eigensolver did not converge".into()))
}

/// Smallest eigenvalue of a symmetric matrix near `shift`, by inverse iteration.
///
/// Independent of [`jacobi_eigen`]; used as a cross-check oracle.
pub fn shifted_inverse_eigen(a: &[f64], n: usize, shift: f64) -> Result<(f64, Vec<f64>)> {
    let mut shifted = a.to_vec();
    for i in 0..n {
        shifted[idx(n, i, i)] -= shift;
    }
    let lu = Lu::factor(&shifted, n)?;
    let mut x = vec![0.0; n];
    for (i, xi) in x.iter_mut().enumerate() {
        *xi = 1.0 / (1.0 + i as f64);
    }
    let mut lambda = shift;
    for _ in 0..200 {
        let y = lu.solve(&x);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Solver("inverse iteration broke down".into()));
        }
        let xn: Vec<f64> = y.iter().map(|v| v / norm).collect();
        // Rayleigh quotient on the original matrix
        let mut ax = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += a[idx(n, i, j)] * xn[j];
            }
            ax[i] = s;
        }
        let rq: f64 = xn.iter().zip(&ax).map(|(u, w)| u * w).sum();
        let delta = (rq - lambda).abs();
        lambda = rq;
        x = xn;
        if delta < 1e-14 * (1.0 + lambda.abs()) {
            break;
        }
    }
    Ok((lambda, x))
}

pub fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        let mut s = 0.0;
        for (aij, xj) in row.iter().zip(x) {
            s += aij * xj;
        }
        y[i] = s;
    }
    y
}
