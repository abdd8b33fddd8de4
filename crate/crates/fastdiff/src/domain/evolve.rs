//! Rescaled-flow evolution on the bounded domain.

use super::operator::{DomainOperator, OperatorKind};
use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::sphere::pow_diff;

/// Stepper family for the bounded solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainStepper {
    /// Explicit fourth-order Runge-Kutta; step-size limited by the inverse
    /// density weight near the boundary.
    Rk4,
    /// Linearized backward Euler with a lagged Jacobian; unconditionally
    /// stable and the default here.
    Imex,
}

/// Configuration of a bounded-domain trajectory.
#[derive(Debug, Clone, Copy)]
pub struct DomainFlowConfig {
    pub dt: f64,
    pub tau_end: f64,
    pub output_every: usize,
    pub stepper: DomainStepper,
    pub positivity_floor: f64,
    /// Rebuild the implicit Jacobian every this many steps.
    pub jacobian_refresh: usize,
}

impl Default for DomainFlowConfig {
    fn default() -> Self {
        DomainFlowConfig {
            dt: 5e-3,
            tau_end: 8.0,
            output_every: 10,
            stepper: DomainStepper::Imex,
            positivity_floor: 1e-14,
            jacobian_refresh: 20,
        }
    }
}

/// Per-output diagnostics of a bounded run.
#[derive(Debug, Clone)]
pub struct DomainRecord {
    pub tau: f64,
    /// `q`-form norm of `w - phi`, the quantity with the sharp rate.
    pub h_norm: f64,
    pub relerr_sup: f64,
    pub j_gap: f64,
    /// Grid snapshot of `w`, kept for the Harnack and relative-error monitors.
    pub w: Vec<f64>,
}

/// Advance `dq/dtau = q - A(q^{1/p})` from a positive initial state, recording
/// distances to the supplied stationary state.
pub fn evolve_bounded(
    op: &DomainOperator,
    phi: &[f64],
    initial: &[f64],
    cfg: &DomainFlowConfig,
) -> Result<Vec<DomainRecord>> {
    if !(cfg.dt > 0.0) || !(cfg.tau_end > 0.0) || cfg.output_every == 0 {
        return Err(Error::Params("flow configuration must be positive".into()));
    }
    if initial.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Params("initial data must be strictly positive".into()));
    }
    let p = op.params.p();
    let m = op.m;

    // state: sine coefficients of q for SFL, grid values for RFL
    enum State {
        Modal(Vec<f64>),
        Grid(Vec<f64>),
    }
    let q0_grid: Vec<f64> = initial.iter().map(|&v| v.powf(p)).collect();
    let mut state = match op.kind {
        OperatorKind::Sfl => State::Modal(op.analyze(&q0_grid)),
        OperatorKind::Rfl => State::Grid(q0_grid),
    };

    let q_grid_of = |st: &State| -> Vec<f64> {
        match st {
            State::Modal(c) => op.synth(c),
            State::Grid(g) => g.clone(),
        }
    };
    // f(q) = q - A(q^{1/p}) in the state representation
    let rhs = |st: &State| -> State {
        let q = q_grid_of(st);
        let v: Vec<f64> = q.iter().map(|&x| x.max(0.0).powf(1.0 / p)).collect();
        match (st, op.kind) {
            (State::Modal(c), OperatorKind::Sfl) => {
                let vc = op.analyze(&v);
                State::Modal(
                    c.iter()
                        .zip(&vc)
                        .zip(&op.multipliers)
                        .map(|((&ck, &vk), &mult)| ck - mult * vk)
                        .collect(),
                )
            }
            (State::Grid(g), OperatorKind::Rfl) => {
                let av = op.apply(&v);
                State::Grid(g.iter().zip(&av).map(|(&x, &a)| x - a).collect())
            }
            _ => unreachable!(),
        }
    };
    let axpy = |st: &State, k: &State, factor: f64| -> State {
        match (st, k) {
            (State::Modal(a), State::Modal(b)) => {
                State::Modal(a.iter().zip(b).map(|(x, y)| x + factor * y).collect())
            }
            (State::Grid(a), State::Grid(b)) => {
                State::Grid(a.iter().zip(b).map(|(x, y)| x + factor * y).collect())
            }
            _ => unreachable!(),
        }
    };

    // explicit stability estimate from the initial state
    if cfg.stepper == DomainStepper::Rk4 {
        let q = q_grid_of(&state);
        let weight = q
            .iter()
            .map(|&x| x.powf((1.0 - p) / p))
            .fold(0.0f64, f64::max);
        let top = match op.kind {
            OperatorKind::Sfl => *op.multipliers.last().unwrap(),
            OperatorKind::Rfl => 2.0 * op.matrix[0], // Gershgorin bound
        };
        if cfg.dt * top * weight / p > 2.5 {
            return Err(Error::Params(format!(
                "explicit step too large for the bounded operator: dt * {:.3e} > 2.5",
                top * weight / p
            )));
        }
    }

    // implicit matrix ((1-dt) I + dt B) with B = Jacobian of A(q^{1/p})
    let dim = match op.kind {
        OperatorKind::Sfl => op.k,
        OperatorKind::Rfl => m,
    };
    let build_implicit = |st: &State| -> Result<Lu> {
        let q = q_grid_of(st);
        let dvdq: Vec<f64> = q.iter().map(|&x| x.max(1e-300).powf((1.0 - p) / p) / p).collect();
        let mut mat = vec![0.0; dim * dim];
        match op.kind {
            OperatorKind::Sfl => {
                for a in 0..dim {
                    let mut unit_vec = vec![0.0; dim];
                    unit_vec[a] = 1.0;
                    let basis = op.synth(&unit_vec);
                    let weighted: Vec<f64> =
                        basis.iter().zip(&dvdq).map(|(&b, &w)| b * w).collect();
                    let col = op.analyze(&weighted);
                    for r in 0..dim {
                        mat[r * dim + a] = op.multipliers[r] * col[r];
                    }
                }
            }
            OperatorKind::Rfl => {
                for r in 0..dim {
                    for ccol in 0..dim {
                        mat[r * dim + ccol] = op.matrix[r * dim + ccol] * dvdq[ccol];
                    }
                }
            }
        }
        for v in mat.iter_mut() {
            *v *= cfg.dt;
        }
        for i in 0..dim {
            mat[i * dim + i] += 1.0 - cfg.dt;
        }
        Lu::factor(&mat, dim)
    };

    let record_of = |st: &State, tau: f64| -> Result<DomainRecord> {
        let q = q_grid_of(st);
        let w: Vec<f64> = q.iter().map(|&x| x.max(0.0).powf(1.0 / p)).collect();
        let diff: Vec<f64> = w.iter().zip(phi).map(|(&a, &b)| a - b).collect();
        let sum: Vec<f64> = w.iter().zip(phi).map(|(&a, &b)| a + b).collect();
        let h_norm = op.quad_form(&diff, &diff).max(0.0).sqrt();
        let relerr_sup = w
            .iter()
            .zip(phi)
            .map(|(&a, &b)| (a / b - 1.0).abs())
            .fold(0.0, f64::max);
        // J(w) - J(phi) with the quadratic part factored q(w-phi, w+phi)
        let q_gap = op.quad_form(&diff, &sum);
        let pow_gap: f64 =
            op.h * w.iter().zip(phi).map(|(&a, &b)| pow_diff(a, b, p + 1.0)).sum::<f64>();
        let j_gap = 0.5 * q_gap - pow_gap / (p + 1.0);
        if !j_gap.is_finite() || !h_norm.is_finite() {
            return Err(Error::Solver("non-finite diagnostics in bounded run".into()));
        }
        Ok(DomainRecord { tau, h_norm, relerr_sup, j_gap, w })
    };

    let n_steps = (cfg.tau_end / cfg.dt).round() as usize;
    let mut records = vec![record_of(&state, 0.0)?];
    let mut lu: Option<Lu> = None;
    for step in 1..=n_steps {
        match cfg.stepper {
            DomainStepper::Rk4 => {
                let k1 = rhs(&state);
                let k2 = rhs(&axpy(&state, &k1, 0.5 * cfg.dt));
                let k3 = rhs(&axpy(&state, &k2, 0.5 * cfg.dt));
                let k4 = rhs(&axpy(&state, &k3, cfg.dt));
                let mut next = axpy(&state, &k1, cfg.dt / 6.0);
                next = axpy(&next, &k2, cfg.dt / 3.0);
                next = axpy(&next, &k3, cfg.dt / 3.0);
                next = axpy(&next, &k4, cfg.dt / 6.0);
                state = next;
            }
            DomainStepper::Imex => {
                if lu.is_none() || (step - 1) % cfg.jacobian_refresh == 0 {
                    lu = Some(build_implicit(&state)?);
                }
                let f = rhs(&state);
                let fvec = match &f {
                    State::Modal(v) | State::Grid(v) => v.clone(),
                };
                let rhs_scaled: Vec<f64> = fvec.iter().map(|&v| cfg.dt * v).collect();
                let delta = lu.as_ref().unwrap().solve(&rhs_scaled);
                state = match state {
                    State::Modal(c) => State::Modal(
                        c.iter().zip(&delta).map(|(a, b)| a + b).collect(),
                    ),
                    State::Grid(g) => State::Grid(
                        g.iter().zip(&delta).map(|(a, b)| a + b).collect(),
                    ),
                };
            }
        }
        let q = q_grid_of(&state);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite state at step {step}")));
        }
        let min_q = q.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_q <= cfg.positivity_floor {
            return Err(Error::Solver(format!(
                "positivity floor binding at step {step}"
            )));
        }
        if step % cfg.output_every == 0 || step == n_steps {
            records.push(record_of(&state, step as f64 * cfg.dt)?);
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{fit_rate, Window};
    use crate::domain::{build_operator, solve_stationary, OperatorKind};
    use crate::params::ProblemParams;

    fn small_setup() -> (DomainOperator, crate::domain::StationaryState) {
        let params = ProblemParams::bounded_domain(1, 0.75, 2.0).unwrap();
        let op = build_operator(OperatorKind::Sfl, 64, 32, &params).unwrap();
        let state = solve_stationary(&op, 6).unwrap();
        (op, state)
    }

    #[test]
    fn stationary_initial_data_stays_put() {
        let (op, state) = small_setup();
        let cfg = DomainFlowConfig { tau_end: 2.0, dt: 5e-3, ..Default::default() };
        let records = evolve_bounded(&op, &state.phi, &state.phi, &cfg).unwrap();
        for rec in &records {
            assert!(rec.h_norm < 1e-9, "tau={}: {}", rec.tau, rec.h_norm);
            assert!(rec.relerr_sup < 1e-9);
            assert!(rec.j_gap.abs() < 1e-9);
        }
    }

    #[test]
    fn perturbed_state_decays_at_the_spectral_rate() {
        let (op, state) = small_setup();
        // perturb along the eigenfunction of the smallest positive eigenvalue
        let e_plus = &state.eigenfunctions[1];
        assert!(state.spectrum[1] > 0.0);
        let initial: Vec<f64> = state
            .phi
            .iter()
            .zip(e_plus)
            .map(|(&f, &e)| f * (1.0 + 1e-3 * e))
            .collect();
        let cfg = DomainFlowConfig { tau_end: 6.0, dt: 5e-3, output_every: 20, ..Default::default() };
        let records = evolve_bounded(&op, &state.phi, &initial, &cfg).unwrap();
        let series: Vec<(f64, f64)> = records.iter().map(|r| (r.tau, r.h_norm)).collect();
        let fit = fit_rate(&series, Window { lo: 1.0, hi: 5.5 }).unwrap();
        let expected = state.nu_tilde / op.params.p();
        assert!(
            (fit.slope - expected).abs() < 0.1 * expected,
            "rate {} vs {expected}",
            fit.slope
        );
        // energy is non-increasing along the run
        for pair in records.windows(2) {
            assert!(pair[1].j_gap <= pair[0].j_gap + 1e-8 * pair[0].j_gap.abs().max(1.0));
        }
    }

    #[test]
    fn rk4_and_imex_agree_on_short_horizons() {
        let (op, state) = small_setup();
        let e_plus = &state.eigenfunctions[1];
        let initial: Vec<f64> = state
            .phi
            .iter()
            .zip(e_plus)
            .map(|(&f, &e)| f * (1.0 + 1e-3 * e))
            .collect();
        let imex = DomainFlowConfig {
            tau_end: 0.5,
            dt: 2e-4,
            output_every: 2500,
            jacobian_refresh: 5,
            ..Default::default()
        };
        let rk4 = DomainFlowConfig { stepper: DomainStepper::Rk4, ..imex };
        let a = evolve_bounded(&op, &state.phi, &initial, &imex).unwrap();
        let b = evolve_bounded(&op, &state.phi, &initial, &rk4).unwrap();
        let (ra, rb) = (a.last().unwrap(), b.last().unwrap());
        assert!(
            (ra.h_norm - rb.h_norm).abs() < 1e-3 * rb.h_norm,
            "{} vs {}",
            ra.h_norm,
            rb.h_norm
        );
    }

    #[test]
    fn rejects_nonpositive_initial_data() {
        let (op, state) = small_setup();
        let mut bad = state.phi.clone();
        bad[3] = 0.0;
        let cfg = DomainFlowConfig::default();
        assert!(evolve_bounded(&op, &state.phi, &bad, &cfg).is_err());
    }
}
