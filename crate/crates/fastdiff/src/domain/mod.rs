//! The bounded-domain toolkit on the interval `(0, 1)`.
//!
//! Two realizations of the Dirichlet fractional Laplacian are implemented:
//! the spectral one (SFL), diagonal in the Dirichlet sine basis with
//! multipliers `(k pi)^{2s}`, and the restricted one (RFL), a dense symmetric
//! collocation matrix for the singular-integral operator with exterior-zero
//! extension. On top of them sit the stationary-state Newton solver, the
//! generalized eigenproblem of the linearization, rescaled-flow evolution,
//! Green's functions, and the Harnack / relative-error monitors.

mod checks;
mod evolve;
mod operator;
mod stationary;

pub use checks::{
    benilan_crandall_check, bootstrap_exponents, ghp_check, relerr_bound_check, BcReport,
    HarnackReport, RelErrBoundReport,
};
pub use evolve::{evolve_bounded, DomainFlowConfig, DomainRecord, DomainStepper};
pub use operator::{
    build_operator, build_operator_scaled, green_bound_check, green_function,
    green_matrix, rfl_singular_integral, DomainOperator, GreenReport, OperatorKind,
};
pub use stationary::{linearized_spectrum, solve_stationary, stationary_solve, DomainSpectrum, StationaryState};
