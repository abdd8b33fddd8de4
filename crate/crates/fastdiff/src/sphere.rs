//! The zonal spectral engine on the sphere `S^N`.
//!
//! Under stereographic projection, a function `w` on `R^N` maps to `v` on the
//! sphere via `w(x) = v(S(x)) B(x)` with `B(x) = (2/(1+|x|^2))^{(N-2s)/2}`,
//! and the fractional Laplacian becomes the diagonal operator `A_s` acting on
//! spherical harmonics of degree `l` by the multiplier
//! `alpha(l) = Gamma(l + N/2 + s) / Gamma(l + N/2 - s)`.
//!
//! Zonal functions (depending only on the polar angle) are represented by
//! coefficients in an orthonormal basis built from Gegenbauer polynomials in
//! `t = cos(theta)` together with their values on a Gauss grid for the zonal
//! weight `(1-t^2)^{(N-2)/2}`. Both representations are stored and kept
//! consistent by construction: a [`ZonalField`] is immutable once built.

use crate::error::{Error, Result};
use crate::params::ProblemParams;
use crate::special::{self, QuadKind, QuadratureRule};

/// Multiplier of `A_s` on spherical harmonics of degree `l`.
///
/// For `s = 1` this reduces to `(l + N/2)(l + N/2 - 1)`, the eigenvalues of
/// the conformal Laplacian shifted into the same normalization.
pub fn alpha(l: usize, params: &ProblemParams) -> f64 {
    let half_n = params.nf() / 2.0;
    let s = params.s();
    special::gamma_ratio(l as f64 + half_n + s, l as f64 + half_n - s)
        .expect("alpha arguments are positive when N > 2s")
}

/// Eigenvalue `nu(l) = alpha(l)/alpha(0) - p` of the linearized operator.
///
/// The values at `l = 0` and `l = 1` are identities of the multipliers
/// (`alpha(0)/alpha(0) = 1` and `alpha(1)/alpha(0) = p`) and are returned
/// exactly; in particular the kernel eigenvalue is an exact zero.
pub fn nu(l: usize, params: &ProblemParams) -> f64 {
    match l {
        0 => 1.0 - params.p(),
        1 => 0.0,
        _ => alpha(l, params) / alpha(0, params) - params.p(),
    }
}

/// Dimension of the space of degree-`l` spherical harmonics on `S^N`.
pub fn harmonic_multiplicity(n_dim: u32, l: usize) -> u64 {
    fn binom(n: u64, k: u64) -> u64 {
        if n < k {
            return 0;
        }
        let mut acc: u128 = 1;
        for i in 0..k {
            acc = acc * (n - i) as u128 / (i + 1) as u128;
        }
        acc as u64
    }
    let n = n_dim as u64;
    let lf = l as u64;
    if l >= 2 {
        binom(n + lf, n) - binom(n + lf - 2, n)
    } else {
        binom(n + lf, n)
    }
}

/// One degree of the linearized spectrum.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumEntry {
    pub l: usize,
    /// `A_s` multiplier.
    pub alpha: f64,
    /// Eigenvalue `nu(l) = alpha(l)/alpha(0) - p` of the linearized operator.
    pub nu: f64,
    /// `mu = nu + p`, the eigenvalue of the plain fractional Laplacian in the
    /// weighted problem.
    pub mu: f64,
    /// Linear decay rate `kappa = nu / p`.
    pub kappa: f64,
    pub multiplicity: u64,
}

/// Closed-form spectrum of the linearization at the bubble.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub entries: Vec<SpectrumEntry>,
    /// Smallest positive eigenvalue, attained at `l = 2`.
    pub gap: f64,
    /// The negative eigenvalue `nu(0) = 1 - p`.
    pub unstable: f64,
}

/// Spectrum of the linearized operator by degree, for `l = 0..=l_max`.
pub fn spectrum_closed_form(params: &ProblemParams, l_max: usize) -> Result<SpectrumReport> {
    if !params.is_whole_space() {
        return Err(Error::Params(
            "the closed-form spectrum exists only in the whole-space regime".into(),
        ));
    }
    if l_max < 2 {
        return Err(Error::Params("need l_max >= 2 to report the spectral gap".into()));
    }
    let p = params.p();
    let mut entries = Vec::with_capacity(l_max + 1);
    let mut prev_alpha = f64::NEG_INFINITY;
    for l in 0..=l_max {
        let a = alpha(l, params);
        if a <= prev_alpha {
            return Err(Error::Solver(format!("multiplier sequence not increasing at l={l}")));
        }
        prev_alpha = a;
        let nu_l = nu(l, params);
        entries.push(SpectrumEntry {
            l,
            alpha: a,
            nu: nu_l,
            mu: nu_l + p,
            kappa: nu_l / p,
            multiplicity: harmonic_multiplicity(params.n_dim(), l),
        });
    }
    Ok(SpectrumReport {
        gap: entries[2].nu,
        unstable: entries[0].nu,
        entries,
    })
}

/// A zonal function on `S^N`: coefficients in the orthonormal zonal basis up
/// to degree `l_max`, plus values on the quadrature grid.
#[derive(Debug, Clone)]
pub struct ZonalField {
    pub coeffs: Vec<f64>,
    pub grid: Vec<f64>,
    l_max: usize,
    n_nodes: usize,
    n_dim: u32,
}

impl ZonalField {
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
}

/// Everything shared by zonal computations for one `(params, l_max, n)`:
/// quadrature grid, normalized basis table, multipliers, surface measures.
#[derive(Debug, Clone)]
pub struct SphereContext {
    pub params: ProblemParams,
    pub l_max: usize,
    pub quad: QuadratureRule,
    /// `b_l(t_k)`, row-major `(l_max+1) x n`.
    basis: Vec<f64>,
    /// Analysis table `|S^{N-1}| w_k b_l(t_k)`.
    analysis: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Surface measure of the equatorial sphere `S^{N-1}`.
    pub equator_area: f64,
    /// Surface measure of `S^N` as seen by the quadrature rule.
    pub sphere_area: f64,
    /// Value of the standard bubble on the sphere: `alpha(0)^{1/(p-1)}`.
    pub v_star: f64,
    /// `||U||^2` in the homogeneous Sobolev norm, `alpha(0)^{(p+1)/(p-1)} |S^N|`.
    pub u_hs_norm_sq: f64,
}

impl SphereContext {
    /// Build the shared tables. Requires whole-space parameters, `N >= 2`,
    /// and `n >= 2 l_max + 2` so that analysis of synthesized fields is exact.
    pub fn new(params: ProblemParams, l_max: usize, n: usize) -> Result<Self> {
        if !params.is_whole_space() {
            return Err(Error::Params("sphere engine requires whole-space parameters".into()));
        }
        if params.n_dim() < 2 {
            return Err(Error::Params(
                "the zonal basis is implemented for sphere dimension N >= 2".into(),
            ));
        }
        if n < 2 * l_max + 2 {
            return Err(Error::Params(format!(
                "need n >= 2 l_max + 2 quadrature nodes (l_max={l_max}, n={n})"
            )));
        }
        let n_dim = params.n_dim();
        let quad = special::quad_rule(QuadKind::ZonalWeighted(n_dim), n)?;
        let equator_area = special::sphere_surface(n_dim - 1)?;
        let lambda = (n_dim as f64 - 1.0) / 2.0;

        // raw Gegenbauer values, then normalize numerically in L^2(S^N)
        let mut basis = vec![0.0; (l_max + 1) * n];
        for (k, &t) in quad.nodes.iter().enumerate() {
            // recurrence across degrees at fixed node
            let mut c_prev = 1.0;
            let mut c = 2.0 * lambda * t;
            basis[k] = c_prev;
            if l_max >= 1 {
                basis[n + k] = c;
            }
            for l in 2..=l_max {
                let lf = l as f64;
                let next =
                    (2.0 * (lf + lambda - 1.0) * t * c - (lf + 2.0 * lambda - 2.0) * c_prev) / lf;
                c_prev = c;
                c = next;
                basis[l * n + k] = c;
            }
        }
        for l in 0..=l_max {
            let row = &mut basis[l * n..(l + 1) * n];
            let norm_sq: f64 = equator_area
                * row
                    .iter()
                    .zip(&quad.weights)
                    .map(|(&b, &w)| w * b * b)
                    .sum::<f64>();
            let inv = 1.0 / norm_sq.sqrt();
            for b in row.iter_mut() {
                *b *= inv;
            }
        }
        let mut analysis = vec![0.0; (l_max + 1) * n];
        for l in 0..=l_max {
            for k in 0..n {
                analysis[l * n + k] = equator_area * quad.weights[k] * basis[l * n + k];
            }
        }
        let alphas: Vec<f64> = (0..=l_max).map(|l| alpha(l, &params)).collect();
        let sphere_area = equator_area * quad.weights.iter().sum::<f64>();
        let p = params.p();
        let v_star = alphas[0].powf(1.0 / (p - 1.0));
        let u_hs_norm_sq = alphas[0].powf((p + 1.0) / (p - 1.0)) * sphere_area;
        Ok(SphereContext {
            params,
            l_max,
            quad,
            basis,
            analysis,
            alphas,
            equator_area,
            sphere_area,
            v_star,
            u_hs_norm_sq,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.quad.len()
    }

    fn check(&self, f: &ZonalField) -> Result<()> {
        if f.l_max != self.l_max || f.n_nodes != self.n_nodes() || f.n_dim != self.params.n_dim()
        {
            return Err(Error::Mismatch(format!(
                "field built for (l_max={}, n={}, N={}) used with (l_max={}, n={}, N={})",
                f.l_max,
                f.n_nodes,
                f.n_dim,
                self.l_max,
                self.n_nodes(),
                self.params.n_dim()
            )));
        }
        Ok(())
    }

    /// Coefficients of grid samples in the orthonormal zonal basis.
    ///
    /// Summed with Neumaier compensation: coefficient noise is amplified by
    /// `alpha(l)` downstream (thousands at `s = 1`, `l = 64`), so the
    /// summation error is kept below the basis-evaluation roundoff.
    pub fn analyze(&self, grid: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        debug_assert_eq!(grid.len(), n);
        let mut coeffs = vec![0.0; self.l_max + 1];
        for (l, c) in coeffs.iter_mut().enumerate() {
            let row = &self.analysis[l * n..(l + 1) * n];
            let mut sum = 0.0f64;
            let mut comp = 0.0f64;
            for (&a, &g) in row.iter().zip(grid) {
                let term = a * g;
                let t = sum + term;
                if sum.abs() >= term.abs() {
                    comp += (sum - t) + term;
                } else {
                    comp += (term - t) + sum;
                }
                sum = t;
            }
            *c = sum + comp;
        }
        coeffs
    }

    /// Grid values of a coefficient vector.
    pub fn synth(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        debug_assert_eq!(coeffs.len(), self.l_max + 1);
        let mut grid = vec![0.0; n];
        for (l, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &self.basis[l * n..(l + 1) * n];
            for (g, &b) in grid.iter_mut().zip(row) {
                *g += c * b;
            }
        }
        grid
    }

    pub fn field_from_grid(&self, grid: Vec<f64>) -> ZonalField {
        let coeffs = self.analyze(&grid);
        ZonalField {
            coeffs,
            grid,
            l_max: self.l_max,
            n_nodes: self.n_nodes(),
            n_dim: self.params.n_dim(),
        }
    }

    /// Field from coefficients; the grid is the truncated synthesis.
    pub fn field_from_coeffs(&self, coeffs: Vec<f64>) -> ZonalField {
        let grid = self.synth(&coeffs);
        ZonalField {
            coeffs,
            grid,
            l_max: self.l_max,
            n_nodes: self.n_nodes(),
            n_dim: self.params.n_dim(),
        }
    }

    /// Spectral truncation of grid samples to degrees `<= l_max`.
    pub fn project_grid(&self, grid: &[f64]) -> Vec<f64> {
        self.synth(&self.analyze(grid))
    }

    /// The degree-`l` zonal mode normalized to unit homogeneous Sobolev norm.
    pub fn mode_field(&self, l: usize) -> Result<ZonalField> {
        if l > self.l_max {
            return Err(Error::Params(format!("mode {l} above cutoff {}", self.l_max)));
        }
        let mut coeffs = vec![0.0; self.l_max + 1];
        coeffs[l] = 1.0 / self.alphas[l].sqrt();
        Ok(self.field_from_coeffs(coeffs))
    }

    /// Diagonal action of `A_s`: multiply each coefficient by `alpha(l)`.
    pub fn apply_as(&self, f: &ZonalField) -> Result<ZonalField> {
        self.check(f)?;
        let coeffs: Vec<f64> = f
            .coeffs
            .iter()
            .zip(&self.alphas)
            .map(|(&c, &a)| a * c)
            .collect();
        Ok(self.field_from_coeffs(coeffs))
    }

    /// Integral over `S^N` of grid samples.
    pub fn integral(&self, grid: &[f64]) -> f64 {
        self.equator_area * self.quad.integrate_samples(grid)
    }

    /// Homogeneous Sobolev pairing: `sum alpha(l) f_l g_l`.
    pub fn hs_inner(&self, f: &ZonalField, g: &ZonalField) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(f.coeffs
            .iter()
            .zip(&g.coeffs)
            .zip(&self.alphas)
            .map(|((&a, &b), &al)| al * a * b)
            .sum())
    }

    pub fn hs_norm(&self, f: &ZonalField) -> Result<f64> {
        Ok(self.hs_inner(f, f)?.sqrt())
    }

    /// Plain `L^2(S^N)` pairing, equal to the `B^{p-1}`-weighted pairing of
    /// the corresponding functions on `R^N`.
    pub fn l2_inner(&self, f: &ZonalField, g: &ZonalField) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(f.coeffs.iter().zip(&g.coeffs).map(|(&a, &b)| a * b).sum())
    }

    /// `U^{p-1}`-weighted pairing on `R^N`: carries the exact factor `alpha(0)`
    /// relative to [`Self::l2_inner`] because `U^{p-1} = alpha(0) B^{p-1}`.
    pub fn u_weighted_l2(&self, f: &ZonalField, g: &ZonalField) -> Result<f64> {
        Ok(self.alphas[0] * self.l2_inner(f, g)?)
    }

    /// Energy functional `J(v) = 1/2 sum alpha(l) c_l^2 - 1/(p+1) int |v|^{p+1}`.
    pub fn j_functional(&self, f: &ZonalField) -> Result<f64> {
        self.check(f)?;
        if f.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite grid values in J".into()));
        }
        let p = self.params.p();
        let quad_part: f64 = self.integral(
            &f.grid.iter().map(|&v| v.abs().powf(p + 1.0)).collect::<Vec<_>>(),
        );
        let hs: f64 = f
            .coeffs
            .iter()
            .zip(&self.alphas)
            .map(|(&c, &a)| a * c * c)
            .sum();
        Ok(0.5 * hs - quad_part / (p + 1.0))
    }

    /// `J` at the standard bubble (constant field `v_star`).
    pub fn j_at_bubble(&self) -> f64 {
        let p = self.params.p();
        (0.5 - 1.0 / (p + 1.0)) * self.u_hs_norm_sq
    }

    /// `J(v) - J(U)` evaluated in centered form, accurate near the bubble.
    ///
    /// Both the quadratic and the power term are computed as differences
    /// against the constant bubble state before summation, so the gap stays
    /// meaningful down to the `1e-13` scale instead of drowning in the `O(1)`
    /// magnitudes of the two energies.
    pub fn j_gap(&self, f: &ZonalField) -> Result<f64> {
        self.check(f)?;
        if f.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite grid values in J".into()));
        }
        let p = self.params.p();
        let vs = self.v_star;
        let c0_star = vs * self.sphere_area.sqrt();
        let mut hs_gap = self.alphas[0] * (f.coeffs[0] - c0_star) * (f.coeffs[0] + c0_star);
        for l in 1..=self.l_max {
            hs_gap += self.alphas[l] * f.coeffs[l] * f.coeffs[l];
        }
        let diff: Vec<f64> = f.grid.iter().map(|&v| pow_diff(v, vs, p + 1.0)).collect();
        let power_gap = self.integral(&diff);
        Ok(0.5 * hs_gap - power_gap / (p + 1.0))
    }

    /// The Euler-Lagrange residual `A_s v - v^p` and its weighted norm
    /// `|| J'(w) ||` in `L^2(U^{1-p} dx)`, which on the sphere is
    /// `alpha(0)^{-1/2} || A_s v - v^p ||_{L^2(S^N)}`.
    pub fn j_prime_residual(&self, f: &ZonalField) -> Result<(ZonalField, f64)> {
        self.check(f)?;
        if f.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite grid values in J'".into()));
        }
        let p = self.params.p();
        let as_grid = self.synth(
            &f.coeffs
                .iter()
                .zip(&self.alphas)
                .map(|(&c, &a)| a * c)
                .collect::<Vec<_>>(),
        );
        let resid: Vec<f64> = as_grid
            .iter()
            .zip(&f.grid)
            .map(|(&av, &v)| av - v.abs().powf(p))
            .collect();
        let norm_sq =
            self.integral(&resid.iter().map(|&r| r * r).collect::<Vec<_>>()) / self.alphas[0];
        Ok((self.field_from_grid(resid), norm_sq.max(0.0).sqrt()))
    }

    /// Sup over the grid of `|v / v_star - 1|`, the relative error against the
    /// standard bubble.
    pub fn relerr_sup(&self, f: &ZonalField) -> f64 {
        f.grid
            .iter()
            .map(|&v| (v / self.v_star - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Stable `v^q - w^q` for positive values of comparable size.
pub fn pow_diff(v: f64, w: f64, q: f64) -> f64 {
    if v > 0.0 && w > 0.0 && (v - w).abs() < 0.3 * w {
        w.powf(q) * (q * (v / w).ln()).exp_m1()
    } else {
        v.abs().powf(q) - w.abs().powf(q)
    }
}
