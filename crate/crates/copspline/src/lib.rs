//! Nonparametric copula density estimation on `[0,1]^d` with tensor-product
//! linear B-splines, uniform-marginal and nonnegativity constraints, and a
//! penalty that pulls the fit toward known bivariate marginal densities.
//!
//! The pipeline: raw samples are mapped to pseudo-observations by column
//! empirical CDFs, averaged against the spline basis into moment estimates,
//! and the coefficient vector is found by a constrained convex QP combining
//! a moment-matching term with the bivariate-marginal penalty.

pub mod basis;
pub mod copulas;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod moments;
pub mod penalty;
pub mod qp;
pub mod quadrature;

pub use error::{Error, Result};
pub use grid::KnotGrid;
