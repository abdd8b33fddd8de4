//! Bubble profiles, stereographic geometry, and nearest-bubble projection.
//!
//! The stationary profiles of the rescaled flow form the manifold
//! `M = { U[z, lambda] }` of translated and dilated bubbles
//!
//! ```text
//! U[z, lambda](x) = A(N,s) ( lambda / (1 + lambda^2 |x-z|^2) )^{(N-2s)/2},
//! ```
//!
//! normalized so that `(-Delta)^s U = U^p`. On the sphere the standard bubble
//! `U[0,1]` becomes the constant `alpha(0)^{1/(p-1)}`, and a dilated bubble
//! `U[0, lambda]` stays zonal, which is what makes the one-parameter
//! projection below cheap and well conditioned.

use crate::error::{Error, Result};
use crate::numerics::brent_min;
use crate::params::ProblemParams;
use crate::special::{self, QuadKind};
use crate::sphere::{SphereContext, ZonalField};

/// Center and scale of a bubble.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleParams {
    pub z: Vec<f64>,
    pub lambda: f64,
}

impl BubbleParams {
    pub fn new(z: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Params(format!("bubble scale must be positive, got {lambda}")));
        }
        Ok(BubbleParams { z, lambda })
    }
}

/// A separated-variables solution of the original equation: extinction time
/// plus the bubble it collapses onto.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtinctionProfile {
    pub t_star: f64,
    pub bubble: BubbleParams,
}

impl ExtinctionProfile {
    pub fn new(t_star: f64, bubble: BubbleParams) -> Result<Self> {
        if !(t_star > 0.0) {
            return Err(Error::Params("extinction time must be positive".into()));
        }
        Ok(ExtinctionProfile { t_star, bubble })
    }
}

/// The normalization constant `A(N,s)` in the bubble formula.
pub fn bubble_constant(params: &ProblemParams) -> f64 {
    let nf = params.nf();
    let s = params.s();
    let ratio = special::gamma_ratio((nf + 2.0 * s) / 2.0, (nf - 2.0 * s) / 2.0)
        .expect("arguments positive for N > 2s");
    2f64.powf((nf - 2.0 * s) / 2.0) * ratio.powf((nf - 2.0 * s) / (4.0 * s))
}

/// Pointwise bubble value `U[z, lambda](x)`.
pub fn bubble_eval(b: &BubbleParams, params: &ProblemParams, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().zip(&b.z).map(|(xi, zi)| (xi - zi) * (xi - zi)).sum();
    let lam = b.lambda;
    bubble_constant(params) * (lam / (1.0 + lam * lam * r2)).powf((params.nf() - 2.0 * params.s()) / 2.0)
}

/// Extinction profile `((p-1)/p)^{p/(p-1)} (T*-t)^{p/(p-1)} U[z,lambda]^p (x)`.
pub fn extinction_profile_eval(
    e: &ExtinctionProfile,
    params: &ProblemParams,
    t: f64,
    x: &[f64],
) -> Result<f64> {
    if !(0.0..=e.t_star).contains(&t) {
        return Err(Error::Domain(format!(
            "time {t} outside [0, T*={}]",
            e.t_star
        )));
    }
    let p = params.p();
    let u = bubble_eval(&e.bubble, params, x);
    let sep = ((p - 1.0) / p).powf(p / (p - 1.0)) * (e.t_star - t).powf(p / (p - 1.0));
    Ok(sep * u.powf(p))
}

/// The rescaling that turns a solution of the original equation into the
/// rescaled unknown: `w = ( u / ( ((p-1)/p)^{p/(p-1)} (T*-t)^{p/(p-1)} ) )^{1/p}`.
pub fn w_from_u(u_val: f64, t: f64, t_star: f64, p: f64) -> f64 {
    let sep = ((p - 1.0) / p).powf(p / (p - 1.0)) * (t_star - t).powf(p / (p - 1.0));
    (u_val / sep).powf(1.0 / p)
}

/// Analytic partial derivatives of the bubble in `z_1..z_N` and `lambda`.
pub fn bubble_tangents(b: &BubbleParams, params: &ProblemParams, x: &[f64]) -> Vec<f64> {
    let n = params.n_dim() as usize;
    let nm2s = params.nf() - 2.0 * params.s();
    let lam = b.lambda;
    let r2: f64 = x.iter().zip(&b.z).map(|(xi, zi)| (xi - zi) * (xi - zi)).sum();
    let denom = 1.0 + lam * lam * r2;
    let u = bubble_eval(b, params, x);
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        out.push(u * nm2s * lam * lam * (x[i] - b.z[i]) / denom);
    }
    out.push(u * nm2s / (2.0 * lam) * (1.0 - lam * lam * r2) / denom);
    out
}

/// Inverse stereographic projection `R^N -> S^N`, north pole at the origin's image.
pub fn stereographic(x: &[f64]) -> Vec<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let scale = 2.0 / (1.0 + r2);
    let mut omega: Vec<f64> = x.iter().map(|&v| scale * v).collect();
    omega.push((1.0 - r2) / (1.0 + r2));
    omega
}

/// Inverse of [`stereographic`]; the south pole is the point at infinity.
pub fn stereographic_inv(omega: &[f64]) -> Result<Vec<f64>> {
    let t = *omega.last().expect("point on S^N");
    if t <= -1.0 + 1e-15 {
        return Err(Error::Domain("south pole maps to the point at infinity".into()));
    }
    Ok(omega[..omega.len() - 1].iter().map(|&w| w / (1.0 + t)).collect())
}

/// Jacobian determinant of [`stereographic`]: `(2/(1+|x|^2))^N`.
pub fn stereographic_jacobian(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (2.0 / (1.0 + r2)).powi(x.len() as i32)
}

/// Conformal factor `B(x) = (2/(1+|x|^2))^{(N-2s)/2}` relating `w` and `v`.
pub fn conformal_factor(params: &ProblemParams, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (2.0 / (1.0 + r2)).powf((params.nf() - 2.0 * params.s()) / 2.0)
}

/// Zonal trace of the dilated bubble on the sphere:
/// `v_lambda(t) = alpha(0)^{1/(p-1)} (2 lambda / ((1+lambda^2) - (lambda^2-1) t))^{(N-2s)/2}`.
pub fn bubble_on_sphere(lambda: f64, params: &ProblemParams, t: f64, v_star: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Params(format!("bubble scale must be positive, got {lambda}")));
    }
    let expo = (params.nf() - 2.0 * params.s()) / 2.0;
    let denom = (1.0 + lambda * lambda) - (lambda * lambda - 1.0) * t;
    Ok(v_star * (2.0 * lambda / denom).powf(expo))
}

/// `d/d lambda` of [`bubble_on_sphere`] at fixed `t`.
pub fn bubble_on_sphere_dlambda(
    lambda: f64,
    params: &ProblemParams,
    t: f64,
    v_star: f64,
) -> Result<f64> {
    let expo = (params.nf() - 2.0 * params.s()) / 2.0;
    let denom = (1.0 + lambda * lambda) - (lambda * lambda - 1.0) * t;
    let v = bubble_on_sphere(lambda, params, t, v_star)?;
    Ok(v * expo * (1.0 / lambda - 2.0 * lambda * (1.0 - t) / denom))
}

/// The dilated bubble as a [`ZonalField`] on the context grid.
pub fn sphere_bubble_field(ctx: &SphereContext, lambda: f64) -> Result<ZonalField> {
    let grid: Result<Vec<f64>> = ctx
        .quad
        .nodes
        .iter()
        .map(|&t| bubble_on_sphere(lambda, &ctx.params, t, ctx.v_star))
        .collect();
    Ok(ctx.field_from_grid(grid?))
}

/// Coefficients of the dilated bubble in the zonal basis.
fn bubble_coeffs(ctx: &SphereContext, lambda: f64) -> Result<Vec<f64>> {
    let grid: Result<Vec<f64>> = ctx
        .quad
        .nodes
        .iter()
        .map(|&t| bubble_on_sphere(lambda, &ctx.params, t, ctx.v_star))
        .collect();
    Ok(ctx.analyze(&grid?))
}

fn dlambda_coeffs(ctx: &SphereContext, lambda: f64) -> Result<Vec<f64>> {
    let grid: Result<Vec<f64>> = ctx
        .quad
        .nodes
        .iter()
        .map(|&t| bubble_on_sphere_dlambda(lambda, &ctx.params, t, ctx.v_star))
        .collect();
    Ok(ctx.analyze(&grid?))
}

/// Product cubature on `S^d`: polar Gauss rule times a rule on the equator,
/// down to equally weighted points on the circle. Integrates polynomials in
/// the ambient coordinates up to degree `~ 2 n_polar - 1` exactly.
pub fn sphere_cubature(d: u32, n_polar: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    if d == 1 {
        let m = 4 * n_polar.max(1);
        let w = 2.0 * std::f64::consts::PI / m as f64;
        return Ok((0..m)
            .map(|j| {
                let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
                (vec![phi.cos(), phi.sin()], w)
            })
            .collect());
    }
    let polar = special::quad_rule(QuadKind::ZonalWeighted(d), n_polar)?;
    let base = sphere_cubature(d - 1, n_polar)?;
    let mut points = Vec::with_capacity(polar.len() * base.len());
    for (&t, &wt) in polar.nodes.iter().zip(&polar.weights) {
        let sin_theta = (1.0 - t * t).sqrt();
        for (eta, weta) in &base {
            let mut omega: Vec<f64> = eta.iter().map(|&e| sin_theta * e).collect();
            omega.push(t);
            points.push((omega, wt * weta));
        }
    }
    Ok(points)
}

/// Sobolev Gram matrix of the `N+1` bubble tangents at `(z, lambda)`,
/// computed as `p int U^{p-1} T_a T_b dx` through the sphere cubature (the
/// volume element is `(1+t)^{-N} d omega`).
pub fn bubble_gram(
    params: &ProblemParams,
    b: &BubbleParams,
    n_polar: usize,
) -> Result<Vec<f64>> {
    let n = params.n_dim() as usize;
    let p = params.p();
    let cubature = sphere_cubature(params.n_dim(), n_polar)?;
    let mut gram = vec![0.0; (n + 1) * (n + 1)];
    for (omega, w) in &cubature {
        let x = match stereographic_inv(omega) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let t = omega[n];
        let volume = w * (1.0 + t).powi(-(n as i32));
        let u = bubble_eval(b, params, &x);
        let tangents = bubble_tangents(b, params, &x);
        let weight = p * u.powf(p - 1.0) * volume;
        for a in 0..=n {
            for c in a..=n {
                gram[a * (n + 1) + c] += weight * tangents[a] * tangents[c];
            }
        }
    }
    for a in 0..=n {
        for c in 0..a {
            gram[a * (n + 1) + c] = gram[c * (n + 1) + a];
        }
    }
    Ok(gram)
}

/// Distance and uniform ratio of `U[z, lambda]` against the standard bubble.
#[derive(Debug, Clone, Copy)]
pub struct BubbleSeparation {
    /// `|| U[z,lambda] - U ||` in the homogeneous Sobolev norm.
    pub hs_distance: f64,
    /// `sup_x | 1 - U[z,lambda](x) / U(x) |`, including the limit at infinity.
    pub sup_ratio: f64,
}

/// Separation of a dilated/translated bubble from `U[0,1]`.
///
/// For `z = 0` the distance is the centered coefficient form
/// `sum alpha(l) (c_l(lambda) - c_l(1))^2`, exact to roundoff even for
/// `lambda` within `1e-3` of 1. For `z != 0` it falls back to
/// `2||U||^2 - 2 int U[z,lambda]^p U dx` with the integral done by cubature.
pub fn bubble_separation(
    ctx: &SphereContext,
    b: &BubbleParams,
    n_polar: usize,
) -> Result<BubbleSeparation> {
    let params = &ctx.params;
    let z_norm = b.z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let hs_distance = if z_norm == 0.0 {
        let c_lam = bubble_coeffs(ctx, b.lambda)?;
        let c0 = ctx.v_star * ctx.sphere_area.sqrt();
        let mut acc = 0.0;
        for (l, &c) in c_lam.iter().enumerate() {
            let diff = if l == 0 { c - c0 } else { c };
            acc += ctx.alphas[l] * diff * diff;
        }
        acc.sqrt()
    } else {
        let p = params.p();
        let n = params.n_dim() as usize;
        let cubature = sphere_cubature(params.n_dim(), n_polar)?;
        let unit = BubbleParams::new(vec![0.0; n], 1.0)?;
        let mut f_val = 0.0;
        for (omega, w) in &cubature {
            let x = match stereographic_inv(omega) {
                Ok(x) => x,
                Err(_) => continue,
            };
            let t = omega[n];
            let volume = w * (1.0 + t).powi(-(n as i32));
            f_val += volume * bubble_eval(b, params, &x).powf(p) * bubble_eval(&unit, params, &x);
        }
        (2.0 * (ctx.u_hs_norm_sq - f_val)).max(0.0).sqrt()
    };

    // sup of |1 - U[z,lambda]/U| sampled along the axis through z, plus the
    // exact limit lambda^{-(N-2s)/2} at infinity where the sup can be attained
    let expo = (params.nf() - 2.0 * params.s()) / 2.0;
    let lam = b.lambda;
    let mut sup = (1.0 - lam.powf(-expo)).abs();
    let axis: Vec<f64> = if z_norm == 0.0 {
        let mut e = vec![0.0; params.n_dim() as usize];
        e[0] = 1.0;
        e
    } else {
        b.z.iter().map(|v| v / z_norm).collect()
    };
    let sample = |rho: f64| {
        let x: Vec<f64> = axis.iter().map(|&a| a * rho).collect();
        let unit = BubbleParams::new(vec![0.0; x.len()], 1.0).unwrap();
        let ratio = bubble_eval(b, params, &x) / bubble_eval(&unit, params, &x);
        (1.0 - ratio).abs()
    };
    sup = sup.max(sample(0.0));
    for &t in &ctx.quad.nodes {
        let rho = ((1.0 - t) / (1.0 + t)).sqrt();
        sup = sup.max(sample(rho)).max(sample(-rho));
    }
    Ok(BubbleSeparation { hs_distance, sup_ratio: sup })
}

/// Result of the nearest-bubble projection over the dilation parameter.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    pub lambda_star: f64,
    /// Sobolev distance to `U[0, lambda_star]`.
    pub distance: f64,
    /// First-order condition `|d/d lambda ||w - U[0,lambda]||^2|` at the minimizer.
    pub stationarity: f64,
    /// Sobolev pairing of the residual with the (non-normalized) dilation tangent.
    pub ortho_pairing: f64,
}

/// Options for [`nearest_bubble`].
#[derive(Debug, Clone, Copy)]
pub struct ProjectionOptions {
    /// Reject fields whose distance to the family exceeds this radius.
    pub trust_radius: f64,
    /// Initial guess for the scale.
    pub warm_start: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions { trust_radius: 1.0, warm_start: 1.0 }
    }
}

/// Project a positive zonal field onto the dilation family `U[0, lambda]`.
///
/// Zonal fields carry no component along the translation tangents (those are
/// non-zonal degree-1 harmonics), so the center stays at the origin and the
/// minimization is one-dimensional in `lambda`: Brent bracketing on the
/// centered objective `sum alpha(l) (c_l - c_l(lambda))^2` followed by Newton
/// polishing of the first-order condition.
pub fn nearest_bubble(
    ctx: &SphereContext,
    field: &ZonalField,
    opts: ProjectionOptions,
) -> Result<Projection> {
    if field.grid.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Projection("field must be strictly positive".into()));
    }
    let objective = |lam: f64| -> Result<f64> {
        let c_lam = bubble_coeffs(ctx, lam)?;
        let mut acc = 0.0;
        for l in 0..=ctx.l_max {
            let d = field.coeffs[l] - c_lam[l];
            acc += ctx.alphas[l] * d * d;
        }
        Ok(acc)
    };
    let deriv = |lam: f64| -> Result<f64> {
        let c_lam = bubble_coeffs(ctx, lam)?;
        let d_lam = dlambda_coeffs(ctx, lam)?;
        let mut acc = 0.0;
        for l in 0..=ctx.l_max {
            acc += -2.0 * ctx.alphas[l] * (field.coeffs[l] - c_lam[l]) * d_lam[l];
        }
        Ok(acc)
    };

    // bracket the minimizer around the warm start
    let lam0 = opts.warm_start.clamp(0.05, 20.0);
    let mut factor = 1.5;
    let (mut lo, mut hi) = (lam0 / factor, lam0 * factor);
    let mut bracketed = false;
    for _ in 0..12 {
        lo = (lam0 / factor).max(0.02);
        hi = (lam0 * factor).min(50.0);
        let fl = objective(lo)?;
        let fm = objective(0.5 * (lo + hi))?;
        let fh = objective(hi)?;
        if fm <= fl && fm <= fh {
            bracketed = true;
            break;
        }
        factor *= 2.0;
        if lo <= 0.021 && hi >= 49.9 {
            bracketed = true; // search the whole admissible range
            break;
        }
    }
    if !bracketed {
        return Err(Error::Projection("could not bracket the nearest bubble".into()));
    }
    let (mut lam, _) = brent_min(
        |l| objective(l).unwrap_or(f64::INFINITY),
        lo,
        hi,
        1e-12,
        300,
    )?;

    // Newton polish on the first-order condition
    let mut g = deriv(lam)?;
    for _ in 0..60 {
        if g.abs() <= 5e-12 {
            break;
        }
        let h = 1e-6 * lam.max(1e-3);
        let gp = (deriv(lam + h)? - deriv(lam - h)?) / (2.0 * h);
        if !gp.is_finite() || gp.abs() < 1e-30 {
            break;
        }
        let step = g / gp;
        lam -= step.clamp(-0.1 * lam, 0.1 * lam);
        g = deriv(lam)?;
    }
    if !(lam > 0.0) || !g.is_finite() {
        return Err(Error::Projection("scale optimization diverged".into()));
    }
    if g.abs() > 1e-10 {
        return Err(Error::Projection(format!(
            "first-order condition not met: |g'| = {:.3e}",
            g.abs()
        )));
    }
    let distance = objective(lam)?.max(0.0).sqrt();
    if distance > opts.trust_radius {
        return Err(Error::Projection(format!(
            "field outside trust region: distance {distance} > {}",
            opts.trust_radius
        )));
    }
    Ok(Projection {
        lambda_star: lam,
        distance,
        stationarity: g.abs(),
        ortho_pairing: -0.5 * g,
    })
}

/// Residual coefficients `field - U[0, lambda]` in the zonal basis.
pub fn residual_coeffs(ctx: &SphereContext, field: &ZonalField, lambda: f64) -> Result<Vec<f64>> {
    let c_lam = bubble_coeffs(ctx, lambda)?;
    Ok(field
        .coeffs
        .iter()
        .zip(&c_lam)
        .map(|(&c, &cl)| c - cl)
        .collect())
}

/// Unit Sobolev-normalized dilation tangent at `U[0, lambda]`, as coefficients.
pub fn unit_dilation_tangent(ctx: &SphereContext, lambda: f64) -> Result<Vec<f64>> {
    let d = dlambda_coeffs(ctx, lambda)?;
    let norm_sq: f64 = d
        .iter()
        .zip(&ctx.alphas)
        .map(|(&c, &a)| a * c * c)
        .sum();
    let inv = 1.0 / norm_sq.sqrt();
    Ok(d.into_iter().map(|c| c * inv).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Lcg64;

    fn params_half() -> ProblemParams {
        ProblemParams::whole_space(3, 0.5).unwrap()
    }

    fn ctx_half() -> SphereContext {
        SphereContext::new(params_half(), 64, 160).unwrap()
    }

    #[test]
    fn bubble_value_at_origin() {
        // N=3, s=1/2: the constant is 2 and U[0,1](0) = 2
        let p = params_half();
        let b = BubbleParams::new(vec![0.0; 3], 1.0).unwrap();
        assert!((bubble_eval(&b, &p, &[0.0, 0.0, 0.0]) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn bubble_scaling_covariance_and_symmetry() {
        let p = params_half();
        let mut rng = Lcg64::new(21);
        let lam = 1.7;
        let b_lam = BubbleParams::new(vec![0.0; 3], lam).unwrap();
        let b_one = BubbleParams::new(vec![0.0; 3], 1.0).unwrap();
        let expo = (p.nf() - 2.0 * p.s()) / 2.0;
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| 2.0 * rng.next_signed()).collect();
            let lhs = bubble_eval(&b_lam, &p, &x);
            let scaled: Vec<f64> = x.iter().map(|&v| lam * v).collect();
            let rhs = lam.powf(expo) * bubble_eval(&b_one, &p, &scaled);
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
        }
        // symmetry about the center
        let b = BubbleParams::new(vec![0.3, -0.2, 0.9], 1.4).unwrap();
        let h = [0.4, 0.1, -0.7];
        let plus: Vec<f64> = b.z.iter().zip(&h).map(|(z, d)| z + d).collect();
        let minus: Vec<f64> = b.z.iter().zip(&h).map(|(z, d)| z - d).collect();
        let (up, um) = (bubble_eval(&b, &p, &plus), bubble_eval(&b, &p, &minus));
        assert!((up - um).abs() < 1e-14 * up);
    }

    #[test]
    fn extinction_profile_values() {
        let p = params_half();
        let b = BubbleParams::new(vec![0.0; 3], 1.0).unwrap();
        let e = ExtinctionProfile::new(2.0, b.clone()).unwrap();
        // vanishes exactly at extinction
        assert_eq!(extinction_profile_eval(&e, &p, 2.0, &[0.5, 0.0, 0.0]).unwrap(), 0.0);
        // p = 2: value is (1/4)(T*-t)^2 U^2
        let x = [0.3, -0.1, 0.2];
        let t = 0.7;
        let val = extinction_profile_eval(&e, &p, t, &x).unwrap();
        let u = bubble_eval(&b, &p, &x);
        assert!((val - 0.25 * (2.0 - t) * (2.0 - t) * u * u).abs() < 1e-13 * val);
        assert!(extinction_profile_eval(&e, &p, 2.5, &x).is_err());
    }

    #[test]
    fn w_transform_recovers_the_bubble() {
        let p = params_half();
        let b = BubbleParams::new(vec![0.1, 0.0, -0.4], 0.8).unwrap();
        let e = ExtinctionProfile::new(1.3, b.clone()).unwrap();
        for t in [0.0, 0.5, 1.0, 1.29] {
            let x = [0.2, 0.7, -0.3];
            let u = extinction_profile_eval(&e, &p, t, &x).unwrap();
            let w = w_from_u(u, t, e.t_star, p.p());
            let expect = bubble_eval(&b, &p, &x);
            assert!((w - expect).abs() < 1e-12 * expect, "t={t}");
        }
    }

    #[test]
    fn tangents_match_finite_differences() {
        let p = params_half();
        let mut rng = Lcg64::new(22);
        for _ in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| rng.next_signed()).collect();
            let lam = 0.5 + 1.5 * rng.next_f64();
            let x: Vec<f64> = (0..3).map(|_| 2.0 * rng.next_signed()).collect();
            let b = BubbleParams::new(z.clone(), lam).unwrap();
            let tangents = bubble_tangents(&b, &p, &x);
            let h = 1e-5;
            for i in 0..3 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let fd = (bubble_eval(&BubbleParams::new(zp, lam).unwrap(), &p, &x)
                    - bubble_eval(&BubbleParams::new(zm, lam).unwrap(), &p, &x))
                    / (2.0 * h);
                let scale = tangents[i].abs().max(1e-3);
                assert!((tangents[i] - fd).abs() < 1e-6 * scale, "z_{i}");
            }
            let fd = (bubble_eval(&BubbleParams::new(z.clone(), lam + h).unwrap(), &p, &x)
                - bubble_eval(&BubbleParams::new(z.clone(), lam - h).unwrap(), &p, &x))
                / (2.0 * h);
            let scale = tangents[3].abs().max(1e-3);
            assert!((tangents[3] - fd).abs() < 1e-6 * scale, "lambda");
        }
    }

    #[test]
    fn tangent_values_at_the_center() {
        let p = params_half();
        let b = BubbleParams::new(vec![0.0; 3], 1.0).unwrap();
        let tangents = bubble_tangents(&b, &p, &[0.0; 3]);
        let u0 = bubble_eval(&b, &p, &[0.0; 3]);
        // translations vanish at the critical point, dilation gives (N-2s)/2 U(0)
        for t in &tangents[..3] {
            assert_eq!(*t, 0.0);
        }
        assert!((tangents[3] - (p.nf() - 2.0 * p.s()) / 2.0 * u0).abs() < 1e-13);
    }

    #[test]
    fn stereographic_identities() {
        let north = stereographic(&[0.0, 0.0, 0.0]);
        assert_eq!(north, vec![0.0, 0.0, 0.0, 1.0]);
        // |x| = 1 lands on the equator
        let eq = stereographic(&[1.0, 0.0, 0.0]);
        assert_eq!(*eq.last().unwrap(), 0.0);
        let mut rng = Lcg64::new(23);
        let params = params_half();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| 3.0 * rng.next_signed()).collect();
            let omega = stereographic(&x);
            let norm: f64 = omega.iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
            let back = stereographic_inv(&omega).unwrap();
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
            }
            // Jacobian equals B^{p+1}
            let jac = stereographic_jacobian(&x);
            let b_fac = conformal_factor(&params, &x);
            assert!((jac - b_fac.powf(params.p() + 1.0)).abs() < 1e-12 * jac);
            // cosine of the polar angle
            let r2: f64 = x.iter().map(|v| v * v).sum();
            assert!((omega[3] - (1.0 - r2) / (1.0 + r2)).abs() < 1e-13);
        }
        assert!(stereographic_inv(&[0.0, 0.0, 0.0, -1.0]).is_err());
    }

    #[test]
    fn sphere_bubble_constant_at_unit_scale() {
        let ctx = ctx_half();
        // alpha(0) = 1 here, so the zonal trace is exactly 1
        for &t in &ctx.quad.nodes {
            let v = bubble_on_sphere(1.0, &ctx.params, t, ctx.v_star).unwrap();
            assert!((v - 1.0).abs() < 1e-14);
        }
        // lambda -> infinity at the south pole: trace vanishes
        let v = bubble_on_sphere(1e8, &ctx.params, -1.0, ctx.v_star).unwrap();
        assert!(v < 1e-7);
        assert!(bubble_on_sphere(-1.0, &ctx.params, 0.0, ctx.v_star).is_err());
    }

    #[test]
    fn sphere_trace_consistent_with_bubble() {
        // v_lambda(cos theta(x)) B(x) = U[0,lambda](x)
        let ctx = ctx_half();
        let params = ctx.params;
        let mut rng = Lcg64::new(24);
        for &lam in &[0.5, 1.0, 2.3] {
            let b = BubbleParams::new(vec![0.0; 3], lam).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| 3.0 * rng.next_signed()).collect();
                let omega = stereographic(&x);
                let v = bubble_on_sphere(lam, &params, omega[3], ctx.v_star).unwrap();
                let lhs = v * conformal_factor(&params, &x);
                let rhs = bubble_eval(&b, &params, &x);
                assert!((lhs - rhs).abs() < 1e-10 * rhs, "lambda={lam}");
            }
        }
    }

    #[test]
    fn dlambda_matches_finite_difference() {
        let ctx = ctx_half();
        for &t in &[-0.9, -0.2, 0.5, 0.99] {
            for &lam in &[0.7, 1.0, 1.8] {
                let d = bubble_on_sphere_dlambda(lam, &ctx.params, t, ctx.v_star).unwrap();
                let h = 1e-6;
                let fd = (bubble_on_sphere(lam + h, &ctx.params, t, ctx.v_star).unwrap()
                    - bubble_on_sphere(lam - h, &ctx.params, t, ctx.v_star).unwrap())
                    / (2.0 * h);
                assert!((d - fd).abs() < 1e-7 * d.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cubature_total_mass_and_moments() {
        for d in [2u32, 3] {
            let pts = sphere_cubature(d, 24).unwrap();
            let total: f64 = pts.iter().map(|(_, w)| w).sum();
            let exact = special::sphere_surface(d).unwrap();
            assert!((total - exact).abs() < 1e-10 * exact, "S^{d}");
            // coordinate moments: int omega_i omega_j = delta_ij |S^d| / (d+1)
            let dim = d as usize + 1;
            for i in 0..dim {
                for j in 0..dim {
                    let m: f64 =
                        pts.iter().map(|(o, w)| w * o[i] * o[j]).sum();
                    let expect = if i == j { exact / dim as f64 } else { 0.0 };
                    assert!((m - expect).abs() < 1e-10, "moment ({i},{j}) on S^{d}");
                }
            }
        }
    }

    #[test]
    fn gram_matrix_is_a_multiple_of_the_identity() {
        let params = params_half();
        let b = BubbleParams::new(vec![0.0; 3], 1.0).unwrap();
        let gram = bubble_gram(&params, &b, 40).unwrap();
        let n = 4;
        let d_analytic = {
            // p ((N-2s)/2)^2 alpha(0)^{(p+1)/(p-1)} |S^N| / (N+1)
            let area = special::sphere_surface(3).unwrap();
            2.0 * 1.0 * area / 4.0
        };
        for a in 0..n {
            for c in 0..n {
                let val = gram[a * n + c];
                if a == c {
                    assert!((val - d_analytic).abs() < 1e-9 * d_analytic, "diag {a}");
                } else {
                    assert!(val.abs() < 1e-10 * d_analytic, "off-diag ({a},{c})");
                }
            }
        }
    }

    #[test]
    fn separation_vanishes_at_the_standard_bubble() {
        let ctx = ctx_half();
        let b = BubbleParams::new(vec![0.0; 3], 1.0).unwrap();
        let sep = bubble_separation(&ctx, &b, 24).unwrap();
        assert!(sep.hs_distance < 1e-10);
        assert!(sep.sup_ratio < 1e-12);
    }

    #[test]
    fn separation_scales_linearly_near_unit_scale() {
        let ctx = ctx_half();
        // Sobolev distance behaves like c |lambda - 1| near the family point
        let d1 = bubble_separation(&ctx, &BubbleParams::new(vec![0.0; 3], 1.01).unwrap(), 24)
            .unwrap()
            .hs_distance;
        let d2 = bubble_separation(&ctx, &BubbleParams::new(vec![0.0; 3], 1.005).unwrap(), 24)
            .unwrap()
            .hs_distance;
        let r1 = d1 / 0.01;
        let r2 = d2 / 0.005;
        assert!((r1 / r2 - 1.0).abs() < 0.01, "ratios {r1} vs {r2}");
        // sup ratio bounded by a stable multiple of |lambda - 1|
        let ks: Vec<f64> = [1.01, 1.05, 1.1]
            .iter()
            .map(|&lam| {
                bubble_separation(&ctx, &BubbleParams::new(vec![0.0; 3], lam).unwrap(), 24)
                    .unwrap()
                    .sup_ratio
                    / (lam - 1.0)
            })
            .collect();
        let mean = ks.iter().sum::<f64>() / ks.len() as f64;
        for k in &ks {
            assert!((k - mean).abs() < 0.2 * mean, "ks = {ks:?}");
        }
    }

    #[test]
    fn separation_symmetric_under_scale_inversion() {
        let ctx = ctx_half();
        for &lam in &[1.3, 2.0] {
            let d = bubble_separation(&ctx, &BubbleParams::new(vec![0.0; 3], lam).unwrap(), 24)
                .unwrap()
                .hs_distance;
            let d_inv = bubble_separation(
                &ctx,
                &BubbleParams::new(vec![0.0; 3], 1.0 / lam).unwrap(),
                24,
            )
            .unwrap()
            .hs_distance;
            assert!((d - d_inv).abs() < 1e-8 * d, "lambda={lam}");
        }
    }

    #[test]
    fn zonal_and_cubature_distances_agree() {
        let ctx = ctx_half();
        let b = BubbleParams::new(vec![0.0; 3], 1.4).unwrap();
        let zonal = bubble_separation(&ctx, &b, 32).unwrap().hs_distance;
        // tiny off-axis shift exercises the cubature path
        let b_eps = BubbleParams::new(vec![1e-9, 0.0, 0.0], 1.4).unwrap();
        let via_cubature = bubble_separation(&ctx, &b_eps, 32).unwrap().hs_distance;
        assert!(
            (zonal - via_cubature).abs() < 1e-4 * zonal,
            "{zonal} vs {via_cubature}"
        );
    }

    #[test]
    fn projection_recovers_a_family_point() {
        let ctx = ctx_half();
        let field = sphere_bubble_field(&ctx, 1.3).unwrap();
        let proj = nearest_bubble(&ctx, &field, ProjectionOptions::default()).unwrap();
        assert!((proj.lambda_star - 1.3).abs() < 1e-6);
        assert!(proj.distance < 1e-8);
    }

    #[test]
    fn projection_ignores_orthogonal_modes() {
        let ctx = ctx_half();
        let bubble = sphere_bubble_field(&ctx, 1.0).unwrap();
        let mode = ctx.mode_field(2).unwrap();
        let grid: Vec<f64> = bubble
            .grid
            .iter()
            .zip(&mode.grid)
            .map(|(&b, &m)| b + 1e-3 * m)
            .collect();
        let field = ctx.field_from_grid(grid);
        let proj = nearest_bubble(&ctx, &field, ProjectionOptions::default()).unwrap();
        assert!((proj.lambda_star - 1.0).abs() < 1e-6, "{}", proj.lambda_star);
        assert!((proj.distance - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn projection_orthogonality_for_perturbed_fields() {
        let ctx = ctx_half();
        let mut rng = Lcg64::new(25);
        for trial in 0..10 {
            let lam = 0.8 + 0.4 * rng.next_f64();
            let bubble = sphere_bubble_field(&ctx, lam).unwrap();
            let mut grid = bubble.grid.clone();
            for l in [0usize, 2, 3, 4] {
                let mode = ctx.mode_field(l).unwrap();
                let amp = 1e-3 * rng.next_signed();
                for (g, &m) in grid.iter_mut().zip(&mode.grid) {
                    *g += amp * m;
                }
            }
            let field = ctx.field_from_grid(grid);
            let proj = nearest_bubble(&ctx, &field, ProjectionOptions::default()).unwrap();
            let rho_norm = {
                let rho = residual_coeffs(&ctx, &field, proj.lambda_star).unwrap();
                rho.iter()
                    .zip(&ctx.alphas)
                    .map(|(&r, &a)| a * r * r)
                    .sum::<f64>()
                    .sqrt()
            };
            assert!(
                proj.ortho_pairing.abs() < 1e-8 * rho_norm,
                "trial {trial}: pairing {} vs norm {rho_norm}",
                proj.ortho_pairing
            );
        }
    }

    #[test]
    fn projection_rejects_far_fields() {
        let ctx = ctx_half();
        let field = ctx.field_from_grid(vec![5.0 * ctx.v_star; ctx.n_nodes()]);
        assert!(matches!(
            nearest_bubble(&ctx, &field, ProjectionOptions::default()),
            Err(Error::Projection(_))
        ));
    }
}
