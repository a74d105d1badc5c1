//! Learning linear operators with bounded Schatten p-norm from sample pairs.
//!
//! The crate provides the operator algebra (singular spectra, Schatten norms,
//! trace identities), projections onto lp and Schatten balls, a finite
//! dimensional empirical risk minimizer over the Schatten ball, synthetic
//! data scenarios, Rademacher-complexity experiments and the risk-curve
//! harness behind the `svnlearn` command-line tool.

pub mod error;
pub mod operator;
pub mod datagen;
pub mod erm;
pub mod projection;
pub mod stats;
pub mod complexity;
pub mod config;
pub mod experiment;
pub mod io;

pub use nalgebra;

pub use error::{Error, Result};
pub use operator::{
    adjoint, apply, rank1, schatten_norm, svd_spectrum, trace, HilbertVector, LinearOperator, Order,
    SchattenBall, SingularSpectrum,
};
pub use projection::{is_member, project_lp, project_schatten, LpBall};
