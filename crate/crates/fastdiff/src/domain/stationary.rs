//! Stationary states `(-Delta)^s phi = phi^p` and the linearized spectrum.

use super::operator::{DomainOperator, OperatorKind};
use crate::error::{Error, Result};
use crate::linalg::{self, Lu};

/// A computed stationary state together with its linearization data.
#[derive(Debug, Clone)]
pub struct StationaryState {
    /// Grid values, strictly positive in the interior.
    pub phi: Vec<f64>,
    /// Sine coefficients (SFL only).
    pub coeffs: Option<Vec<f64>>,
    /// Discrete `L^2` residual of the stationary equation.
    pub residual: f64,
    /// Eigenvalues of the linearization, ascending.
    pub spectrum: Vec<f64>,
    /// Matching eigenfunctions on the grid, normalized to `q(e, e) = 1`.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Smallest positive eigenvalue.
    pub nu_tilde: f64,
    /// True when some eigenvalue sits at zero within tolerance.
    pub degenerate: bool,
    /// Number of negative eigenvalues.
    pub morse_index: usize,
}

/// Newton amplitude pre-solve on the ray `c Phi`: the scalar equation
/// `lambda_1 c = c^p int Phi^{p+1}` has the unique positive root
/// `c = (lambda_1 / int Phi^{p+1})^{1/(p-1)}`.
pub fn ray_amplitude(op: &DomainOperator) -> f64 {
    let p = op.params.p();
    let phi_power = op.h
        * op.phi1
            .iter()
            .map(|&v| v.abs().powf(p + 1.0))
            .sum::<f64>();
    (op.lambda1 / phi_power).powf(1.0 / (p - 1.0))
}

/// Solve the stationary equation by damped Newton from the ray pre-solve.
///
/// The SFL solve runs in the `K`-dimensional sine-coefficient space with the
/// nonlinearity evaluated on the grid; the RFL solve runs on the grid. In
/// both cases the Jacobian is the exact linearization `A - p diag(phi^{p-1})`
/// restricted to the solver's space, the same matrix the spectrum uses.
pub fn stationary_solve(op: &DomainOperator, init: Option<Vec<f64>>) -> Result<(Vec<f64>, Option<Vec<f64>>, f64)> {
    let p = op.params.p();
    let m = op.m;
    match op.kind {
        OperatorKind::Sfl => {
            let k = op.k;
            let mut c: Vec<f64> = match init {
                Some(grid) => op.analyze(&grid),
                None => {
                    let mut c0 = vec![0.0; k];
                    c0[0] = ray_amplitude(op);
                    c0
                }
            };
            let f_of = |c: &[f64]| -> (Vec<f64>, Vec<f64>) {
                let grid = op.synth(c);
                let power: Vec<f64> = grid.iter().map(|&v| v.abs().powf(p) * v.signum()).collect();
                let pc = op.analyze(&power);
                let f: Vec<f64> = c
                    .iter()
                    .zip(&op.multipliers)
                    .zip(&pc)
                    .map(|((&ck, &mult), &pk)| mult * ck - pk)
                    .collect();
                (f, grid)
            };
            let (mut f, mut grid) = f_of(&c);
            let mut fnorm = norm(&f);
            for _ in 0..80 {
                if fnorm < 1e-12 {
                    break;
                }
                // Jacobian: Lambda - p S^T diag(|u|^{p-1}) S h
                let weights: Vec<f64> = grid.iter().map(|&v| p * v.abs().powf(p - 1.0)).collect();
                let mut jac = vec![0.0; k * k];
                let mut weighted = vec![0.0; k * m];
                for mode in 0..k {
                    let basis = op.synth(&unit(k, mode));
                    for i in 0..m {
                        weighted[mode * m + i] = weights[i] * basis[i];
                    }
                }
                for a in 0..k {
                    let arow = op.analyze(&weighted[a * m..(a + 1) * m]);
                    for b in 0..k {
                        jac[a * k + b] = -arow[b];
                    }
                    jac[a * k + a] += op.multipliers[a];
                }
                let lu = Lu::factor(&jac, k)?;
                let step = lu.solve(&f);
                let mut damping = 1.0;
                loop {
                    let trial: Vec<f64> = c.iter().zip(&step).map(|(a, b)| a - damping * b).collect();
                    let (tf, tgrid) = f_of(&trial);
                    let tnorm = norm(&tf);
                    if tnorm < (1.0 - 0.25 * damping) * fnorm || damping < 1e-4 {
                        c = trial;
                        f = tf;
                        grid = tgrid;
                        fnorm = tnorm;
                        break;
                    }
                    damping *= 0.5;
                }
            }
            if fnorm >= 1e-9 {
                return Err(Error::Solver(format!("Newton stalled at residual {fnorm:.3e}")));
            }
            // Polish to the fixed point of the K-truncated flow map,
            // q = Lambda analyze((synth q)^{1/p}). The Galerkin solution is
            // O(tail of phi^p) away from it, which would show up as a floor
            // in trajectory distances; the polished state removes the floor.
            let mut q_hat: Vec<f64> = c
                .iter()
                .zip(&op.multipliers)
                .map(|(&ck, &mult)| mult * ck)
                .collect();
            let mut final_res = f64::INFINITY;
            for _ in 0..40 {
                let q_grid = op.synth(&q_hat);
                if q_grid.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::Solver("flow fixed point lost positivity".into()));
                }
                let v: Vec<f64> = q_grid.iter().map(|&x| x.powf(1.0 / p)).collect();
                let av = op.analyze(&v);
                let g: Vec<f64> = q_hat
                    .iter()
                    .zip(&av)
                    .zip(&op.multipliers)
                    .map(|((&qk, &vk), &mult)| qk - mult * vk)
                    .collect();
                final_res = norm(&g);
                if final_res < 1e-13 {
                    break;
                }
                // Jacobian I - Lambda P diag(v^{1-p}/p) S
                let dvdq: Vec<f64> =
                    q_grid.iter().map(|&x| x.powf((1.0 - p) / p) / p).collect();
                let mut jac = vec![0.0; k * k];
                for a in 0..k {
                    let basis = op.synth(&unit(k, a));
                    let weighted: Vec<f64> =
                        basis.iter().zip(&dvdq).map(|(&b, &w)| b * w).collect();
                    let col = op.analyze(&weighted);
                    for r in 0..k {
                        jac[r * k + a] = -op.multipliers[r] * col[r];
                    }
                    jac[a * k + a] += 1.0;
                }
                let lu = Lu::factor(&jac, k)?;
                let step = lu.solve(&g);
                for (qk, st) in q_hat.iter_mut().zip(&step) {
                    *qk -= st;
                }
            }
            if final_res >= 1e-9 {
                return Err(Error::Solver(format!(
                    "fixed-point polish stalled at residual {final_res:.3e}"
                )));
            }
            let grid: Vec<f64> = op.synth(&q_hat).iter().map(|&x| x.powf(1.0 / p)).collect();
            if grid.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Solver("stationary state lost positivity".into()));
            }
            let coeffs = op.analyze(&grid);
            Ok((grid, Some(coeffs), final_res))
        }
        OperatorKind::Rfl => {
            let mut u: Vec<f64> = match init {
                Some(grid) => grid,
                None => {
                    let amp = ray_amplitude(op);
                    op.phi1.iter().map(|&v| amp * v).collect()
                }
            };
            let f_of = |u: &[f64]| -> Vec<f64> {
                let au = op.apply(u);
                au.iter()
                    .zip(u)
                    .map(|(&a, &v)| a - v.abs().powf(p) * v.signum())
                    .collect()
            };
            let mut f = f_of(&u);
            let mut fnorm = norm_h(&f, op.h);
            for _ in 0..80 {
                if fnorm < 1e-12 {
                    break;
                }
                let mut jac = op.matrix.clone();
                for i in 0..m {
                    jac[i * m + i] -= p * u[i].abs().powf(p - 1.0);
                }
                let lu = Lu::factor(&jac, m)?;
                let step = lu.solve(&f);
                let mut damping = 1.0;
                loop {
                    let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a - damping * b).collect();
                    let tf = f_of(&trial);
                    let tnorm = norm_h(&tf, op.h);
                    if tnorm < (1.0 - 0.25 * damping) * fnorm || damping < 1e-4 {
                        u = trial;
                        f = tf;
                        fnorm = tnorm;
                        break;
                    }
                    damping *= 0.5;
                }
            }
            if fnorm >= 1e-9 {
                return Err(Error::Solver(format!("Newton stalled at residual {fnorm:.3e}")));
            }
            if u.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Solver("stationary state lost positivity".into()));
            }
            Ok((u, None, fnorm))
        }
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|z| z * z).sum::<f64>().sqrt()
}

fn norm_h(v: &[f64], h: f64) -> f64 {
    (h * v.iter().map(|z| z * z).sum::<f64>()).sqrt()
}

/// Spectrum of the generalized eigenproblem `(A - p D) e = nu D e` with
/// `D = diag(phi^{p-1})`, restricted to the operator's resolved space.
#[derive(Debug, Clone)]
pub struct DomainSpectrum {
    pub nus: Vec<f64>,
    /// Grid eigenfunctions, `q`-orthonormal.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Largest residual `||(A - pD)e - nu D e||` over the returned pairs.
    pub max_residual: f64,
    /// Largest deviation `|q(e_i, e_j) - delta_ij|`.
    pub ortho_defect: f64,
}

/// Solve the symmetric generalized problem by Cholesky reduction and Jacobi.
///
/// Returns the `count` smallest eigenvalues with `q`-orthonormal grid
/// eigenfunctions. A vanishing weight `phi^{p-1}` in the interior aborts.
pub fn linearized_spectrum(
    op: &DomainOperator,
    phi: &[f64],
    count: usize,
) -> Result<DomainSpectrum> {
    let p = op.params.p();
    if phi.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Solver("weight phi^{p-1} vanishes in the interior".into()));
    }
    let m = op.m;
    let (dim, a_mat, d_mat): (usize, Vec<f64>, Vec<f64>) = match op.kind {
        OperatorKind::Sfl => {
            let k = op.k;
            // A in mode space is diag(multipliers); D is the weighted Gram
            let weights: Vec<f64> = phi.iter().map(|&v| v.powf(p - 1.0)).collect();
            let mut d = vec![0.0; k * k];
            let mut weighted = vec![0.0; k * m];
            for mode in 0..k {
                let basis = op.synth(&unit(k, mode));
                for i in 0..m {
                    weighted[mode * m + i] = weights[i] * basis[i];
                }
            }
            for a in 0..k {
                let arow = op.analyze(&weighted[a * m..(a + 1) * m]);
                for b in 0..k {
                    d[a * k + b] = arow[b];
                }
            }
            // symmetrize roundoff
            for a in 0..k {
                for b in 0..a {
                    let avg = 0.5 * (d[a * k + b] + d[b * k + a]);
                    d[a * k + b] = avg;
                    d[b * k + a] = avg;
                }
            }
            let mut a_full = vec![0.0; k * k];
            for i in 0..k {
                a_full[i * k + i] = op.multipliers[i];
            }
            (k, a_full, d)
        }
        OperatorKind::Rfl => {
            let mut d = vec![0.0; m * m];
            for i in 0..m {
                d[i * m + i] = phi[i].powf(p - 1.0);
            }
            (m, op.matrix.clone(), d)
        }
    };

    // (A - pD) c = nu D c  ->  L^{-1} (A - pD) L^{-T} y = nu y with D = L L^T
    let l = linalg::cholesky(&d_mat, dim)
        .map_err(|_| Error::Solver("weight matrix not positive definite".into()))?;
    let mut shifted = a_mat.clone();
    for i in 0..dim * dim {
        shifted[i] -= p * d_mat[i];
    }
    // B = L^{-1} shifted L^{-T}
    let mut b = vec![0.0; dim * dim];
    for col in 0..dim {
        let col_vec: Vec<f64> = (0..dim).map(|r| shifted[r * dim + col]).collect();
        let y = linalg::forward_sub(&l, dim, &col_vec);
        for r in 0..dim {
            b[r * dim + col] = y[r];
        }
    }
    let mut b2 = vec![0.0; dim * dim];
    for row in 0..dim {
        let row_vec: Vec<f64> = (0..dim).map(|c| b[row * dim + c]).collect();
        let y = linalg::forward_sub(&l, dim, &row_vec);
        for c in 0..dim {
            b2[row * dim + c] = y[c];
        }
    }
    for a in 0..dim {
        for c in 0..a {
            let avg = 0.5 * (b2[a * dim + c] + b2[c * dim + a]);
            b2[a * dim + c] = avg;
            b2[c * dim + a] = avg;
        }
    }
    let (vals, vecs) = linalg::jacobi_eigen(&b2, dim)?;
    let count = count.min(dim);

    let mut nus = Vec::with_capacity(count);
    let mut eigenfunctions = Vec::with_capacity(count);
    let mut max_residual = 0.0f64;
    for j in 0..count {
        let y: Vec<f64> = (0..dim).map(|r| vecs[r * dim + j]).collect();
        let c = linalg::backward_sub_t(&l, dim, &y);
        // normalize to q(e, e) = 1: q = c^T A c in the solver space
        let ac = linalg::mat_vec(&a_mat, dim, &c);
        let q_val: f64 = c.iter().zip(&ac).map(|(a, b)| a * b).sum();
        if !(q_val > 0.0) {
            return Err(Error::Solver("eigenvector with nonpositive energy".into()));
        }
        let inv = 1.0 / q_val.sqrt();
        let c_n: Vec<f64> = c.iter().map(|v| v * inv).collect();
        // residual of the generalized problem
        let acn = linalg::mat_vec(&shifted, dim, &c_n);
        let dcn = linalg::mat_vec(&d_mat, dim, &c_n);
        let resid = acn
            .iter()
            .zip(&dcn)
            .map(|(&a, &d)| (a - vals[j] * d) * (a - vals[j] * d))
            .sum::<f64>()
            .sqrt();
        max_residual = max_residual.max(resid);
        let grid = match op.kind {
            OperatorKind::Sfl => op.synth(&c_n),
            OperatorKind::Rfl => c_n.clone(),
        };
        nus.push(vals[j]);
        eigenfunctions.push(grid);
    }

    // q-orthonormality defect in the solver space
    let mut ortho_defect = 0.0f64;
    for i in 0..count {
        for j in 0..count {
            let q_ij = op.quad_form(&eigenfunctions[i], &eigenfunctions[j]);
            let target = if i == j { 1.0 } else { 0.0 };
            ortho_defect = ortho_defect.max((q_ij - target).abs());
        }
    }
    Ok(DomainSpectrum { nus, eigenfunctions, max_residual, ortho_defect })
}

/// Convenience: stationary state plus its spectrum in one call.
pub fn solve_stationary(op: &DomainOperator, eig_count: usize) -> Result<StationaryState> {
    let (phi, coeffs, residual) = stationary_solve(op, None)?;
    let spec = linearized_spectrum(op, &phi, eig_count)?;
    let tol = 1e-8 * spec.nus.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let degenerate = spec.nus.iter().any(|&v| v.abs() < tol);
    let morse_index = spec.nus.iter().filter(|&&v| v < -tol).count();
    let nu_tilde = spec
        .nus
        .iter()
        .cloned()
        .find(|&v| v > tol)
        .ok_or_else(|| Error::Solver("no positive eigenvalue found".into()))?;
    Ok(StationaryState {
        phi,
        coeffs,
        residual,
        spectrum: spec.nus,
        eigenfunctions: spec.eigenfunctions,
        nu_tilde,
        degenerate,
        morse_index,
    })
}
