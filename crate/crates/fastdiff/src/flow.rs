//! Time integration of the rescaled flow in sphere form.
//!
//! The unknown is `q = v^p`, advanced by `dq/dtau = q - A_s(q^{1/p})`. The
//! state lives on the quadrature grid and stays inside the degree-`l_max`
//! span: the right-hand side re-analyzes after the only nonlinear operation
//! (`q^{1/p}`) and the updates are linear combinations of in-span vectors.
//!
//! Along the way the solver monitors the discrete energy identity
//! `dJ/dtau = -(4p/(p+1)^2) int |d(v^{(p+1)/2})/dtau|^2`, whose per-step
//! defect is second order in the step size.

use crate::bubble::{self, ProjectionOptions};
use crate::error::{Error, Result};
use crate::params::ProblemParams;
use crate::rng::Lcg64;
use crate::sphere::{SphereContext, ZonalField};

/// Time stepper choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepper {
    /// Classical explicit fourth-order Runge-Kutta on `q`.
    Rk4,
    /// Same tableau on the integrating-factor variable `Q = e^{-tau} q`,
    /// which handles the linear growth term exactly; useful on long horizons.
    Imex,
}

/// Configuration of a single trajectory.
#[derive(Debug, Clone, Copy)]
pub struct FlowConfig {
    pub dt: f64,
    pub tau_end: f64,
    /// Emit a record every this many steps.
    pub output_every: usize,
    pub stepper: Stepper,
    /// NaN guard on `q`; any binding of the floor invalidates the run.
    pub positivity_floor: f64,
    /// Explicit-stability budget: requires `dt * alpha(L) / (p alpha(0))`
    /// below this factor for the RK4 stepper.
    pub stability_factor: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt: 2e-3,
            tau_end: 10.0,
            output_every: 25,
            stepper: Stepper::Rk4,
            positivity_floor: 1e-14,
            stability_factor: 0.5,
        }
    }
}

/// Per-output diagnostics of a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRecord {
    pub tau: f64,
    /// `J(w) - J(U)`.
    pub j_gap: f64,
    /// Sobolev distance to the projected bubble `U[0, lambda_star]`.
    pub hs_dist: f64,
    pub lambda_star: f64,
    /// `sup |w/U - 1|` over the grid.
    pub relerr_sup: f64,
    /// `|| J'(w) ||` in the `U^{1-p}`-weighted norm.
    pub residual_weighted: f64,
    /// Energy-identity defect of the step ending at this output.
    pub dissipation_residual: f64,
    /// Mode amplitudes of the residual: degrees 0..4 (index 1 is the
    /// component along the dilation tangent at `lambda_star`).
    pub sigma: [f64; 5],
}

/// A finished trajectory plus run-level monitors.
#[derive(Debug, Clone)]
pub struct EvolveOutput {
    pub records: Vec<TrajectoryRecord>,
    /// Largest per-step energy defect along the run.
    pub max_defect: f64,
    /// Smallest grid value of `q` seen along the run.
    pub min_q: f64,
}

/// Advance a strictly positive zonal field under the rescaled flow.
pub fn evolve(ctx: &SphereContext, initial: &ZonalField, cfg: &FlowConfig) -> Result<EvolveOutput> {
    if !(cfg.dt > 0.0) || !(cfg.tau_end > 0.0) || cfg.output_every == 0 {
        return Err(Error::Params("flow configuration must be positive".into()));
    }
    let p = ctx.params.p();
    if cfg.stepper == Stepper::Rk4 {
        let budget = cfg.dt * ctx.alphas[ctx.l_max] / (p * ctx.alphas[0]);
        if budget > cfg.stability_factor {
            return Err(Error::Params(format!(
                "explicit step too large: dt alpha(L)/(p alpha(0)) = {budget:.3e} exceeds {}",
                cfg.stability_factor
            )));
        }
    }
    if initial.grid.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Params("initial field must be strictly positive".into()));
    }

    let n = ctx.n_nodes();
    // q = v^p, projected into the resolved span
    let mut q = ctx.project_grid(
        &initial.grid.iter().map(|&v| v.powf(p)).collect::<Vec<f64>>(),
    );
    let mut min_q = q.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_q <= cfg.positivity_floor {
        return Err(Error::Solver("initial data touches the positivity floor".into()));
    }

    let rhs = |q_grid: &[f64]| -> Vec<f64> {
        let v: Vec<f64> = q_grid.iter().map(|&x| x.max(0.0).powf(1.0 / p)).collect();
        let coeffs = ctx.analyze(&v);
        let as_grid = ctx.synth(
            &coeffs
                .iter()
                .zip(&ctx.alphas)
                .map(|(&c, &a)| a * c)
                .collect::<Vec<f64>>(),
        );
        q_grid.iter().zip(&as_grid).map(|(&x, &av)| x - av).collect()
    };
    // integrating-factor right-hand side for Q = e^{-sigma} q
    let rhs_if = |sigma: f64, big_q: &[f64]| -> Vec<f64> {
        let factor = (-sigma * (p - 1.0) / p).exp();
        let v: Vec<f64> = big_q.iter().map(|&x| x.max(0.0).powf(1.0 / p)).collect();
        let coeffs = ctx.analyze(&v);
        let as_grid = ctx.synth(
            &coeffs
                .iter()
                .zip(&ctx.alphas)
                .map(|(&c, &a)| a * c)
                .collect::<Vec<f64>>(),
        );
        as_grid.iter().map(|&av| -factor * av).collect()
    };

    let n_steps = (cfg.tau_end / cfg.dt).round() as usize;
    let mut records = Vec::new();
    let mut max_defect: f64 = 0.0;
    let mut last_defect = 0.0;
    let mut warm_lambda = 1.0;

    let record_state = |q_grid: &[f64], tau: f64, defect: f64, warm: &mut f64| -> Result<TrajectoryRecord> {
        let v: Vec<f64> = q_grid.iter().map(|&x| x.powf(1.0 / p)).collect();
        let field = ctx.field_from_grid(v);
        let proj = bubble::nearest_bubble(
            ctx,
            &field,
            ProjectionOptions { trust_radius: 1.0, warm_start: *warm },
        )?;
        *warm = proj.lambda_star;
        let rho = bubble::residual_coeffs(ctx, &field, proj.lambda_star)?;
        let tangent = bubble::unit_dilation_tangent(ctx, proj.lambda_star)?;
        let mut sigma = [0.0; 5];
        for l in [0usize, 2, 3, 4] {
            if l <= ctx.l_max {
                sigma[l] = ctx.alphas[l].sqrt() * rho[l];
            }
        }
        sigma[1] = rho
            .iter()
            .zip(&tangent)
            .zip(&ctx.alphas)
            .map(|((&r, &t), &a)| a * r * t)
            .sum();
        let (_, residual_weighted) = ctx.j_prime_residual(&field)?;
        let rec = TrajectoryRecord {
            tau,
            j_gap: ctx.j_gap(&field)?,
            hs_dist: proj.distance,
            lambda_star: proj.lambda_star,
            relerr_sup: ctx.relerr_sup(&field),
            residual_weighted,
            dissipation_residual: defect,
            sigma,
        };
        if !rec.j_gap.is_finite() || !rec.hs_dist.is_finite() {
            return Err(Error::Solver("non-finite diagnostics".into()));
        }
        Ok(rec)
    };

    records.push(record_state(&q, 0.0, 0.0, &mut warm_lambda)?);

    for step in 1..=n_steps {
        let q_pre = q.clone();
        match cfg.stepper {
            Stepper::Rk4 => {
                let k1 = rhs(&q);
                let y2: Vec<f64> = q.iter().zip(&k1).map(|(a, b)| a + 0.5 * cfg.dt * b).collect();
                let k2 = rhs(&y2);
                let y3: Vec<f64> = q.iter().zip(&k2).map(|(a, b)| a + 0.5 * cfg.dt * b).collect();
                let k3 = rhs(&y3);
                let y4: Vec<f64> = q.iter().zip(&k3).map(|(a, b)| a + cfg.dt * b).collect();
                let k4 = rhs(&y4);
                for i in 0..n {
                    q[i] += cfg.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            Stepper::Imex => {
                let k1 = rhs_if(0.0, &q);
                let y2: Vec<f64> = q.iter().zip(&k1).map(|(a, b)| a + 0.5 * cfg.dt * b).collect();
                let k2 = rhs_if(0.5 * cfg.dt, &y2);
                let y3: Vec<f64> = q.iter().zip(&k2).map(|(a, b)| a + 0.5 * cfg.dt * b).collect();
                let k3 = rhs_if(0.5 * cfg.dt, &y3);
                let y4: Vec<f64> = q.iter().zip(&k3).map(|(a, b)| a + cfg.dt * b).collect();
                let k4 = rhs_if(cfg.dt, &y4);
                let growth = cfg.dt.exp();
                for i in 0..n {
                    q[i] = growth
                        * (q[i] + cfg.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
                }
            }
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite state at step {step}")));
        }
        let step_min = q.iter().cloned().fold(f64::INFINITY, f64::min);
        min_q = min_q.min(step_min);
        if step_min <= cfg.positivity_floor {
            return Err(Error::Solver(format!(
                "positivity floor binding at step {step}: run left the studied regime"
            )));
        }
        last_defect = dissipation_defect_grids(ctx, &q_pre, &q, cfg.dt);
        max_defect = max_defect.max(last_defect);
        if step % cfg.output_every == 0 || step == n_steps {
            let tau = step as f64 * cfg.dt;
            records.push(record_state(&q, tau, last_defect, &mut warm_lambda)?);
        }
    }
    let _ = last_defect;
    Ok(EvolveOutput { records, max_defect, min_q })
}

/// Energy-identity defect of one step, from the `q`-grids before and after.
///
/// `| dJ/dt + (4p/(p+1)^2) int ((v_+^{(p+1)/2} - v_-^{(p+1)/2})/dt)^2 |`,
/// with every difference formed pointwise before summation (the subtraction
/// of nearby states is exact in floating point), so the returned defect is
/// the genuine discretization residual rather than roundoff of `O(1)`
/// energies.
pub fn dissipation_defect_grids(ctx: &SphereContext, q_pre: &[f64], q_post: &[f64], dt: f64) -> f64 {
    let p = ctx.params.p();
    let inv_p = 1.0 / p;
    let n = ctx.n_nodes();
    let mut v_pre = vec![0.0; n];
    let mut v_post = vec![0.0; n];
    for i in 0..n {
        v_pre[i] = q_pre[i].powf(inv_p);
        v_post[i] = q_post[i].powf(inv_p);
    }
    // coefficient part: 1/2 sum alpha (c+ - c-)(c+ + c-)
    let dv: Vec<f64> = v_post.iter().zip(&v_pre).map(|(a, b)| a - b).collect();
    let sv: Vec<f64> = v_post.iter().zip(&v_pre).map(|(a, b)| a + b).collect();
    let dc = ctx.analyze(&dv);
    let sc = ctx.analyze(&sv);
    let mut hs_part = 0.0;
    for l in 0..=ctx.l_max {
        hs_part += ctx.alphas[l] * dc[l] * sc[l];
    }
    // power part: int v_+^{p+1} - v_-^{p+1}, via relative differences
    let pow_diffs: Vec<f64> = v_pre
        .iter()
        .zip(&v_post)
        .map(|(&a, &b)| a.powf(p + 1.0) * ((p + 1.0) * ((b - a) / a).ln_1p()).exp_m1())
        .collect();
    let power_part = ctx.integral(&pow_diffs);
    let delta_j = 0.5 * hs_part - power_part / (p + 1.0);

    let m = (p + 1.0) / 2.0;
    let rate_sq: Vec<f64> = v_pre
        .iter()
        .zip(&v_post)
        .map(|(&a, &b)| {
            let dm = a.powf(m) * (m * ((b - a) / a).ln_1p()).exp_m1();
            let r = dm / dt;
            r * r
        })
        .collect();
    let dissip = 4.0 * p / ((p + 1.0) * (p + 1.0)) * ctx.integral(&rate_sq);
    (delta_j / dt + dissip).abs()
}

/// Public form of the defect on two consecutive solver states given as fields.
pub fn dissipation_check(
    ctx: &SphereContext,
    pre: &ZonalField,
    post: &ZonalField,
    dt: f64,
) -> f64 {
    let p = ctx.params.p();
    let q_pre: Vec<f64> = pre.grid.iter().map(|&v| v.powf(p)).collect();
    let q_post: Vec<f64> = post.grid.iter().map(|&v| v.powf(p)).collect();
    dissipation_defect_grids(ctx, &q_pre, &q_post, dt)
}

/// Exactly solvable linearized flow: mode `l` evolves as
/// `rho_l(tau) = rho_l(0) exp(-kappa_l tau)` with `kappa_l = nu(l)/p`.
///
/// Returns the coefficient vectors at the same output cadence as [`evolve`].
pub fn evolve_linearized(
    params: &ProblemParams,
    initial_modes: &[f64],
    cfg: &FlowConfig,
) -> Result<Vec<(f64, Vec<f64>)>> {
    if !params.is_whole_space() {
        return Err(Error::Params("linearized flow requires whole-space parameters".into()));
    }
    let p = params.p();
    let kappas: Vec<f64> = (0..initial_modes.len())
        .map(|l| crate::sphere::nu(l, params) / p)
        .collect();
    let n_steps = (cfg.tau_end / cfg.dt).round() as usize;
    let mut out = Vec::new();
    let mut step = 0usize;
    loop {
        let tau = step as f64 * cfg.dt;
        let modes: Vec<f64> = initial_modes
            .iter()
            .zip(&kappas)
            .map(|(&c, &k)| c * (-k * tau).exp())
            .collect();
        out.push((tau, modes));
        if step >= n_steps {
            break;
        }
        step = (step + cfg.output_every).min(n_steps);
    }
    Ok(out)
}

/// Initial datum: the exact bubble of scale `lambda`.
pub fn initial_bubble(ctx: &SphereContext, lambda: f64) -> Result<ZonalField> {
    bubble::sphere_bubble_field(ctx, lambda)
}

/// Initial datum: bubble times `(1 + eps e_l)` with `e_l` the unit
/// Sobolev-normalized zonal mode.
pub fn initial_bubble_mode(ctx: &SphereContext, eps: f64, l: usize) -> Result<ZonalField> {
    let mode = ctx.mode_field(l)?;
    let grid: Vec<f64> = mode.grid.iter().map(|&m| ctx.v_star * (1.0 + eps * m)).collect();
    if grid.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Params("mode perturbation destroys positivity".into()));
    }
    Ok(ctx.field_from_grid(grid))
}

/// Initial datum: positive random zonal field `v_star (1 + sum c_l e_l)` with
/// coefficients decaying like `l^{-4}`, seeded deterministically.
pub fn initial_random(ctx: &SphereContext, eps: f64, seed: u64) -> Result<ZonalField> {
    let mut rng = Lcg64::new(seed);
    let mut amps = vec![0.0; ctx.l_max + 1];
    for (l, amp) in amps.iter_mut().enumerate().skip(1) {
        *amp = eps * rng.next_signed() / (l as f64).powi(4);
    }
    let mut scale = 1.0;
    for _ in 0..40 {
        let mut grid = vec![ctx.v_star; ctx.n_nodes()];
        for (l, &a) in amps.iter().enumerate().skip(1) {
            if a == 0.0 {
                continue;
            }
            let mode = ctx.mode_field(l)?;
            for (g, &m) in grid.iter_mut().zip(&mode.grid) {
                *g += ctx.v_star * scale * a * m;
            }
        }
        if grid.iter().all(|&v| v > 0.1 * ctx.v_star) {
            return Ok(ctx.field_from_grid(grid));
        }
        scale *= 0.5;
    }
    Err(Error::Params("could not build a positive random field".into()))
}

/// Runtime verdicts for the differential-inequality diagnostics of a run.
#[derive(Debug, Clone, Copy)]
pub struct InequalityChecks {
    /// `J` non-increasing across outputs up to `1e-8 max(1, |J|)`.
    pub j_monotone: bool,
    /// `||J'||^2 <= -p (1+relerr)^{p-1} dJ/dtau + slack` at interior outputs.
    pub easy_ok: bool,
    /// `J gap <= margin/(2 nu_gap) ||J'||^2` once the relative error is below 0.1.
    pub hard_ok: bool,
    pub max_easy_violation: f64,
    pub max_hard_ratio: f64,
}

/// Check the two sides of the differential inequality along recorded outputs.
///
/// `dJ/dtau` is a centered difference of the recorded energies; `slack`
/// absorbs its discretization error, and `hard_margin` multiplies the
/// constant `1/(2 nu_gap)` on the hard side.
pub fn check_inequalities(
    records: &[TrajectoryRecord],
    params: &ProblemParams,
    slack: f64,
    hard_margin: f64,
) -> InequalityChecks {
    let p = params.p();
    let nu_gap = crate::sphere::nu(2, params);
    let mut j_monotone = true;
    let mut easy_ok = true;
    let mut hard_ok = true;
    let mut max_easy_violation = 0.0f64;
    let mut max_hard_ratio = 0.0f64;
    for i in 0..records.len() {
        if i + 1 < records.len() {
            let tol = 1e-8 * records[i].j_gap.abs().max(1.0);
            if records[i + 1].j_gap > records[i].j_gap + tol {
                j_monotone = false;
            }
        }
        if i > 0 && i + 1 < records.len() {
            let dj = (records[i + 1].j_gap - records[i - 1].j_gap)
                / (records[i + 1].tau - records[i - 1].tau);
            let lhs = records[i].residual_weighted * records[i].residual_weighted;
            let rhs = -p * (1.0 + records[i].relerr_sup).powf(p - 1.0) * dj + slack;
            max_easy_violation = max_easy_violation.max(lhs - rhs);
            if lhs > rhs {
                easy_ok = false;
            }
        }
        if records[i].relerr_sup < 0.1 {
            let bound = hard_margin / (2.0 * nu_gap)
                * records[i].residual_weighted
                * records[i].residual_weighted;
            if records[i].j_gap > bound {
                hard_ok = false;
            }
            if bound > 0.0 {
                max_hard_ratio = max_hard_ratio.max(records[i].j_gap / bound);
            }
        }
    }
    InequalityChecks { j_monotone, easy_ok, hard_ok, max_easy_violation, max_hard_ratio }
}
