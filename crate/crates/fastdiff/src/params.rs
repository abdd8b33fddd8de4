//! Problem parameters and the closed-form exponents derived from them.
//!
//! Every module reads `(N, s, p, m)` from a validated [`ProblemParams`]. The
//! whole-space regime pins `p = (N+2s)/(N-2s)` (so `m p = 1` exactly), while
//! the bounded-domain regime takes a subcritical `p` as input. All exponent
//! formulas are evaluated from `(N, s)` directly rather than from `p`, which
//! avoids cancellation when `p` is close to 1.

use crate::error::{Error, Result};

/// Which setting the parameters describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// The critical-exponent problem on all of `R^N`.
    WholeSpace,
    /// Subcritical diffusion on a bounded domain with Dirichlet conditions.
    BoundedDomain,
}

/// Validated problem parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    n_dim: u32,
    s: f64,
    p: f64,
    regime: Regime,
}

impl ProblemParams {
    /// Whole-space parameters: requires `N > 2s`, `0 < s <= 1`; sets `p` critically.
    pub fn whole_space(n_dim: u32, s: f64) -> Result<Self> {
        Self::validate_s(s, true)?;
        if n_dim == 0 {
            return Err(Error::Params("dimension must be positive".into()));
        }
        let nf = n_dim as f64;
        if nf <= 2.0 * s {
            return Err(Error::Params(format!(
                "whole-space regime needs N > 2s (N={n_dim}, 2s={})",
                2.0 * s
            )));
        }
        let p = (nf + 2.0 * s) / (nf - 2.0 * s);
        Ok(ProblemParams { n_dim, s, p, regime: Regime::WholeSpace })
    }

    /// Bounded-domain parameters: requires `s < 1` strictly and `p` in the
    /// subcritical window `(1, (N+2s)/(N-2s))`. When `N <= 2s` the window
    /// degenerates and any `p > 1` is accepted.
    pub fn bounded_domain(n_dim: u32, s: f64, p: f64) -> Result<Self> {
        Self::validate_s(s, false)?;
        if n_dim == 0 {
            return Err(Error::Params("dimension must be positive".into()));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Params(format!("exponent p must exceed 1, got {p}")));
        }
        let nf = n_dim as f64;
        if nf > 2.0 * s {
            let crit = (nf + 2.0 * s) / (nf - 2.0 * s);
            if p >= crit {
                return Err(Error::Params(format!(
                    "bounded-domain p must lie in (1, {crit}), got {p}"
                )));
            }
        }
        Ok(ProblemParams { n_dim, s, p, regime: Regime::BoundedDomain })
    }

    /// Constructor matching the scenario configuration: the whole-space
    /// regime ignores `p_opt`, the bounded regime requires it.
    pub fn make(n_dim: u32, s: f64, regime: Regime, p_opt: Option<f64>) -> Result<Self> {
        match regime {
            Regime::WholeSpace => Self::whole_space(n_dim, s),
            Regime::BoundedDomain => {
                let p = p_opt.ok_or_else(|| {
                    Error::Params("bounded-domain regime requires an exponent p".into())
                })?;
                Self::bounded_domain(n_dim, s, p)
            }
        }
    }

    fn validate_s(s: f64, allow_one: bool) -> Result<()> {
        let ok = if allow_one { s > 0.0 && s <= 1.0 } else { s > 0.0 && s < 1.0 };
        if !ok || !s.is_finite() {
            return Err(Error::Params(format!(
                "order s must lie in (0, 1{}], got {s}",
                if allow_one { "" } else { ")" }
            )));
        }
        Ok(())
    }

    pub fn n_dim(&self) -> u32 {
        self.n_dim
    }

    pub fn nf(&self) -> f64 {
        self.n_dim as f64
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `m = 1/p`.
    pub fn m(&self) -> f64 {
        1.0 / self.p
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Critical exponent `(N+2s)/(N-2s)`; only meaningful when `N > 2s`.
    pub fn critical_p(&self) -> f64 {
        (self.nf() + 2.0 * self.s) / (self.nf() - 2.0 * self.s)
    }

    pub fn is_whole_space(&self) -> bool {
        self.regime == Regime::WholeSpace
    }
}

/// The sharp decay rates of the whole-space problem, plus the time change.
#[derive(Debug, Clone, Copy)]
pub struct SharpExponents {
    /// Decay rate of the Sobolev distance in `tau`: `4s/(N-2s+2)`.
    pub rate_w_hs: f64,
    /// Power of `T* - t` for the profile distance in original time: `(N+2s)/(N-2s+2)`.
    pub rate_u: f64,
    /// Decay rate of the energy gap in `tau`: `8s/(N-2s+2)`, twice the distance rate.
    pub rate_j: f64,
    /// Proven lower bound on the uniform relative-error rate: `8s/(N-2s+2)^2`.
    pub rate_relerr_bound: f64,
    /// Extinction time used by the `t <-> tau` bijection.
    pub t_star: f64,
    p: f64,
}

impl SharpExponents {
    pub fn new(params: &ProblemParams, t_star: f64) -> Result<Self> {
        if !params.is_whole_space() {
            return Err(Error::Params(
                "sharp closed-form rates exist only in the whole-space regime; \
                 bounded-domain rates come from the computed spectrum"
                    .into(),
            ));
        }
        if !(t_star > 0.0) {
            return Err(Error::Params("extinction time must be positive".into()));
        }
        let nf = params.nf();
        let s = params.s();
        let d = nf - 2.0 * s + 2.0;
        Ok(SharpExponents {
            rate_w_hs: 4.0 * s / d,
            rate_u: (nf + 2.0 * s) / d,
            rate_j: 8.0 * s / d,
            rate_relerr_bound: 8.0 * s / (d * d),
            t_star,
            p: params.p(),
        })
    }

    /// Rescaled time `tau = -(p/(p-1)) log((T*-t)/T*)`, defined for `0 <= t < T*`.
    pub fn tau_of_t(&self, t: f64) -> Result<f64> {
        time_map(self.t_star, self.p, t)
    }

    /// Original time `t = T* (1 - exp(-(p-1) tau / p))`.
    pub fn t_of_tau(&self, tau: f64) -> f64 {
        time_map_inverse(self.t_star, self.p, tau)
    }
}

/// `tau` as a function of `t` for a given extinction time. Rejects `t >= T*`.
pub fn time_map(t_star: f64, p: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) || t >= t_star {
        return Err(Error::Domain(format!(
            "original time must satisfy 0 <= t < T*={t_star}, got {t}"
        )));
    }
    Ok(-(p / (p - 1.0)) * ((t_star - t) / t_star).ln())
}

/// Inverse of [`time_map`].
pub fn time_map_inverse(t_star: f64, p: f64, tau: f64) -> f64 {
    t_star * (-(-(p - 1.0) / p * tau).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_exponents_for_reference_cases() {
        let p1 = ProblemParams::whole_space(3, 0.5).unwrap();
        assert_eq!(p1.p(), 2.0);
        assert_eq!(p1.m(), 0.5);
        let p2 = ProblemParams::whole_space(3, 1.0).unwrap();
        assert_eq!(p2.p(), 5.0);
        assert!((p2.m() - 0.2).abs() < 1e-16);
        assert!((p1.m() * p1.p() - 1.0).abs() < 1e-16);
    }

    #[test]
    fn rejects_supercritical_order() {
        // N <= 2s violated: 1 <= 1.5
        assert!(ProblemParams::whole_space(1, 0.75).is_err());
        assert!(ProblemParams::whole_space(2, 1.0).is_err());
        assert!(ProblemParams::whole_space(3, 0.0).is_err());
        assert!(ProblemParams::whole_space(3, 1.2).is_err());
    }

    #[test]
    fn bounded_domain_window() {
        // N=1, s=0.3: window (1, 1.6/0.4) = (1, 4)
        assert!(ProblemParams::bounded_domain(1, 0.3, 2.0).is_ok());
        assert!(ProblemParams::bounded_domain(1, 0.3, 4.0).is_err());
        // N=1, s=0.75: N <= 2s, window open above
        assert!(ProblemParams::bounded_domain(1, 0.75, 2.0).is_ok());
        assert!(ProblemParams::bounded_domain(1, 0.75, 9.0).is_ok());
        assert!(ProblemParams::bounded_domain(1, 0.75, 1.0).is_err());
        // s = 1 never allowed on bounded domains
        assert!(ProblemParams::bounded_domain(1, 1.0, 2.0).is_err());
        assert!(ProblemParams::make(1, 0.75, Regime::BoundedDomain, None).is_err());
    }

    #[test]
    fn sharp_rates_reference_values() {
        let p = ProblemParams::whole_space(3, 0.5).unwrap();
        let e = SharpExponents::new(&p, 1.0).unwrap();
        assert!((e.rate_w_hs - 0.5).abs() < 1e-15);
        assert!((e.rate_j - 1.0).abs() < 1e-15);
        assert!((e.rate_u - 1.0).abs() < 1e-15);
        assert!((e.rate_relerr_bound - 0.25).abs() < 1e-15);

        let p = ProblemParams::whole_space(3, 1.0).unwrap();
        let e = SharpExponents::new(&p, 2.5).unwrap();
        assert!((e.rate_w_hs - 4.0 / 3.0).abs() < 1e-15);
        assert!((e.rate_j - 8.0 / 3.0).abs() < 1e-15);
        assert!((e.rate_u - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sharp_rates_reject_bounded_domain() {
        let p = ProblemParams::bounded_domain(1, 0.75, 2.0).unwrap();
        assert!(SharpExponents::new(&p, 1.0).is_err());
    }

    #[test]
    fn time_map_reference_point() {
        // p = 2, T* = 1, t = 1 - 1/e: T* - t = e^{-tau/2} gives tau = 2
        let tau = time_map(1.0, 2.0, 1.0 - (-1.0f64).exp()).unwrap();
        assert!((tau - 2.0).abs() < 1e-12);
        assert_eq!(time_map(1.0, 2.0, 0.0).unwrap(), 0.0);
        assert!(time_map(1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn time_map_round_trip_and_monotone() {
        let params = ProblemParams::whole_space(4, 0.8).unwrap();
        let e = SharpExponents::new(&params, 3.7).unwrap();
        let mut prev_tau = -1.0;
        for k in 0..20 {
            let t = 3.7 * (k as f64) / 20.0;
            let tau = e.tau_of_t(t).unwrap();
            assert!(tau > prev_tau, "time map must be strictly increasing");
            prev_tau = tau;
            let back = e.t_of_tau(tau);
            assert!(
                (back - t).abs() <= 1e-12 * t.abs().max(1.0),
                "round trip at t={t}: {back}"
            );
        }
        // tau(0) = 0 for any parameters
        assert_eq!(e.tau_of_t(0.0).unwrap(), 0.0);
    }
}
