//! Numerical laboratory for the Fisher-KPP free boundary problem
//!
//! ```text
//! ∂_t u = ∂²_x u + u   for x > μ_t,
//! u(x,t) = 1           for x <= μ_t,
//! ∂_x u(μ_t, t) = 0,   u(·,0) = v,
//! ```
//!
//! solved by a certified two-sided operator-splitting scheme and cross-checked
//! against the penalized Fisher-KPP equations `∂_t u_n = ∂²_x u_n + u_n - u_n^n`,
//! a stopped-path Feynman-Kac Monte Carlo estimator and the N-BBM particle
//! system.
//!
//! Module map:
//!
//! - [`grid`]: grids, profiles, initial conditions, solution fields, boundary paths
//! - [`heat`]: heat kernel, Gaussian convolution `G_t`, cut `C_m`
//! - [`sandwich`]: lower/upper iterates with their L¹ gap certificate
//! - [`kpp`]: explicit finite differences for the penalized equations
//! - [`boundary`]: free boundary extraction and structural checks
//! - [`feynman_kac`]: Monte Carlo estimators of `u` and `u_n`
//! - [`nbbm`]: branching Brownian motion with selection
//! - [`diagnostics`]: residuals of the identities the solution satisfies
//! - [`io`]: CSV/JSON persistence
//! - [`cli`]: the `fbp-lab` command line

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod feynman_kac;
pub mod grid;
pub mod heat;
pub mod io;
pub mod kpp;
pub mod nbbm;
pub mod report;
pub mod sandwich;

pub use error::{FbpError, Result};
pub use grid::{
    check_monotone, check_monotone_within, sample_ic, BoundaryPath, Grid1D, IcKind, InitialCondition, Profile,
    SolutionField,
};
pub use report::Report;
