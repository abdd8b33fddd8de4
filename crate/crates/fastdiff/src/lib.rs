//! Numerical laboratory for fractional fast-diffusion extinction profiles.

// Validations use `!(x > 0.0)` on purpose: the negation is true for NaN,
// which `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod numerics;
pub mod params;
pub mod bubble;
pub mod rng;
pub mod special;
pub mod report;
pub mod scenario;
pub mod sphere;

pub use error::{Error, Result};
pub use params::{ProblemParams, Regime, SharpExponents};

// Every code block in the guide runs as a doctest, so the book cannot drift
// from the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    pub struct Intro;
    #[doc = include_str!("../../../book/src/params.md")]
    pub struct Params;
    #[doc = include_str!("../../../book/src/special.md")]
    pub struct Special;
    #[doc = include_str!("../../../book/src/bubbles.md")]
    pub struct Bubbles;
    #[doc = include_str!("../../../book/src/spectral.md")]
    pub struct Spectral;
    #[doc = include_str!("../../../book/src/flow.md")]
    pub struct Flow;
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    pub struct Diagnostics;
    #[doc = include_str!("../../../book/src/domain.md")]
    pub struct Domain;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
