//! Special functions and quadrature on `[-1, 1]`.
//!
//! Everything here is self-contained: log-Gamma via a shifted Stirling series,
//! Gegenbauer polynomials via the three-term recurrence, and Gauss rules for
//! the zonal weight `(1 - t^2)^{(N-2)/2}`. The zonal rules are native Gauss
//! rules built on the Gegenbauer family with index `lambda = (N-1)/2`, so the
//! Legendre rule is just the `lambda = 1/2` member of the same code path.

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;

/// Natural log of the Gamma function for `x > 0`.
///
/// Arguments below 12 are shifted up with `Gamma(x+1) = x Gamma(x)` and the
/// Stirling series is evaluated at the shifted point. Relative accuracy of
/// `exp(log_gamma(x))` is a few ulps on `[0.5, 50]`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    let mut shift = 0.0;
    let mut z = x;
    while z < 12.0 {
        shift -= z.ln();
        z += 1.0;
    }
    let zi = 1.0 / z;
    let zi2 = zi * zi;
    // Stirling coefficients B_{2n} / (2n (2n-1))
    let series = zi
        * (1.0 / 12.0
            + zi2 * (-1.0 / 360.0
                + zi2 * (1.0 / 1260.0
                    + zi2 * (-1.0 / 1680.0
                        + zi2 * (1.0 / 1188.0 + zi2 * (-691.0 / 360_360.0))))));
    Ok((z - 0.5) * z.ln() - z + LN_SQRT_2PI + series + shift)
}

/// Ratio `Gamma(a) / Gamma(b)` through the log representation.
pub fn gamma_ratio(a: f64, b: f64) -> Result<f64> {
    Ok((log_gamma(a)? - log_gamma(b)?).exp())
}

/// Gegenbauer polynomial `C_l^{(a)}(t)` by the three-term recurrence.
///
/// Base cases: `C_0 = 1`, `C_1 = 2 a t`.
pub fn gegenbauer(l: usize, a: f64, t: f64) -> f64 {
    match l {
        0 => 1.0,
        1 => 2.0 * a * t,
        _ => {
            let mut c_prev = 1.0;
            let mut c = 2.0 * a * t;
            for k in 2..=l {
                let kf = k as f64;
                let next = (2.0 * (kf + a - 1.0) * t * c - (kf + 2.0 * a - 2.0) * c_prev) / kf;
                c_prev = c;
                c = next;
            }
            c
        }
    }
}

/// Derivative `d/dt C_l^{(a)}(t) = 2 a C_{l-1}^{(a+1)}(t)`.
pub fn gegenbauer_deriv(l: usize, a: f64, t: f64) -> f64 {
    if l == 0 {
        0.0
    } else {
        2.0 * a * gegenbauer(l - 1, a + 1.0, t)
    }
}

/// Endpoint value `C_l^{(a)}(1) = Gamma(l + 2a) / (Gamma(2a) l!)`.
pub fn gegenbauer_at_one(l: usize, a: f64) -> Result<f64> {
    let lf = l as f64;
    Ok((log_gamma(lf + 2.0 * a)? - log_gamma(2.0 * a)? - log_gamma(lf + 1.0)?).exp())
}

/// Kind of quadrature rule on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadKind {
    /// Plain Gauss-Legendre (weight 1).
    Legendre,
    /// Gauss rule for the zonal weight `(1 - t^2)^{(N-2)/2}` on the sphere `S^N`.
    ZonalWeighted(u32),
}

impl QuadKind {
    /// Gegenbauer index of the orthogonal family behind the rule.
    fn lambda(self) -> Result<f64> {
        match self {
            QuadKind::Legendre => Ok(0.5),
            QuadKind::ZonalWeighted(n_dim) => {
                if n_dim < 2 {
                    return Err(Error::Params(format!(
                        "zonal quadrature needs sphere dimension N >= 2, got {n_dim}"
                    )));
                }
                Ok((n_dim as f64 - 1.0) / 2.0)
            }
        }
    }
}

/// A Gauss rule: strictly increasing nodes in `(-1, 1)` with positive weights.
///
/// `n` nodes integrate `t^k` against the rule's weight exactly for `k <= 2n-1`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub kind: QuadKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate a function against the rule's weight.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }

    /// Integrate grid samples taken at the rule's nodes.
    pub fn integrate_samples(&self, vals: &[f64]) -> f64 {
        debug_assert_eq!(vals.len(), self.nodes.len());
        self.weights.iter().zip(vals).map(|(&w, &v)| w * v).sum()
    }
}

/// Build a Gauss rule of the requested kind with `n >= 2` nodes.
///
/// Nodes are the zeros of `C_n^{(lambda)}`, located by a sign-change scan in
/// the polar angle followed by bisection and Newton polishing; weights come
/// from the standard Gauss formula for orthogonal polynomials.
pub fn quad_rule(kind: QuadKind, n: usize) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(Error::Params(format!("quadrature size must be >= 2, got {n}")));
    }
    let lambda = kind.lambda()?;
    let nodes = gegenbauer_zeros(n, lambda)?;

    // w_k = (a_n / a_{n-1}) * h_{n-1} / (C_n'(x_k) C_{n-1}(x_k))
    let nf = n as f64;
    let lead_ratio = 2.0 * (nf + lambda - 1.0) / nf;
    let ln_h_prev = std::f64::consts::PI.ln() + (1.0 - 2.0 * lambda) * 2f64.ln()
        + log_gamma(nf - 1.0 + 2.0 * lambda)?
        - log_gamma(nf)?
        - (nf - 1.0 + lambda).ln()
        - 2.0 * log_gamma(lambda)?;
    let h_prev = ln_h_prev.exp();

    let mut weights = Vec::with_capacity(n);
    for &x in &nodes {
        let dp = gegenbauer_deriv(n, lambda, x);
        let pm1 = gegenbauer(n - 1, lambda, x);
        let w = lead_ratio * h_prev / (dp * pm1);
        if !(w > 0.0) {
            return Err(Error::Solver(format!(
                "nonpositive Gauss weight at node {x}: {w}"
            )));
        }
        weights.push(w);
    }
    Ok(QuadratureRule { kind, nodes, weights })
}

fn gegenbauer_zeros(n: usize, lambda: f64) -> Result<Vec<f64>> {
    let grid = 8 * n;
    let eval = |theta: f64| gegenbauer(n, lambda, theta.cos());

    let mut zeros = Vec::with_capacity(n);
    let mut theta_prev = 0.0_f64;
    let mut f_prev = eval(theta_prev);
    for j in 1..=grid {
        let theta = std::f64::consts::PI * j as f64 / grid as f64;
        let f = eval(theta);
        if f_prev == 0.0 {
            zeros.push(theta_prev.cos());
        } else if f_prev * f < 0.0 {
            // bisect in theta, then Newton in x
            let (mut lo, mut hi, mut flo) = (theta_prev, theta, f_prev);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let fm = eval(mid);
                if flo * fm <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            let mut x = (0.5 * (lo + hi)).cos();
            let mut node_resid = f64::INFINITY;
            for _ in 0..8 {
                let fx = gegenbauer(n, lambda, x);
                let dfx = gegenbauer_deriv(n, lambda, x);
                let step = fx / dfx;
                x -= step;
                node_resid = step.abs();
                if node_resid < 1e-16 * x.abs().max(0.1) {
                    break;
                }
            }
            // Newton correction in node coordinates is the residual that matters
            if node_resid > 1e-12 {
                return Err(Error::Solver(format!(
                    "Newton did not converge at quadrature node {x}"
                )));
            }
            zeros.push(x);
        }
        theta_prev = theta;
        f_prev = f;
    }
    if zeros.len() != n {
        return Err(Error::Solver(format!(
            "expected {n} quadrature nodes, found {}",
            zeros.len()
        )));
    }
    // theta runs from 0 to pi, so x = cos(theta) came out decreasing
    zeros.reverse();
    Ok(zeros)
}

/// Exact moment `int_{-1}^{1} t^k (1-t^2)^alpha dt` (zero for odd `k`).
pub fn zonal_moment(k: usize, alpha: f64) -> Result<f64> {
    if k % 2 == 1 {
        return Ok(0.0);
    }
    let kf = k as f64;
    // Beta((k+1)/2, alpha+1)
    Ok((log_gamma((kf + 1.0) / 2.0)? + log_gamma(alpha + 1.0)?
        - log_gamma((kf + 1.0) / 2.0 + alpha + 1.0)?)
    .exp())
}

/// Surface measure of the unit sphere `S^{d}` embedded in `R^{d+1}`.
pub fn sphere_surface(d: u32) -> Result<f64> {
    let df = d as f64;
    Ok((((df + 1.0) / 2.0) * std::f64::consts::PI.ln() + 2f64.ln()
        - log_gamma((df + 1.0) / 2.0)?)
    .exp())
}
