//! Viscosity and characteristic solvers for first-order equations
//! `<b(u,x), grad u> + c(u,x) u = f(x)` on flat tori of dimension one or two.
//!
//! The linear problem is solved along backward characteristics and, in
//! parallel, as the zero-viscosity limit of `ε(-Δ)u + <b, grad u> + c u = f`
//! discretized with upwind differences. Nonlinear problems are handled by
//! Picard iteration on the coefficients once the structural constants pass
//! the hyperbolicity gate in [`constants`].

pub mod characteristics;
pub mod cli;
pub mod constants;
pub mod elliptic;
pub mod experiments;
pub mod expr;
pub mod geometry;
pub mod nonlinear;
pub mod pde;
pub mod report;

pub use constants::{compute_constants, ConstantsReport, LambdaBox};
pub use expr::FieldExpr;
pub use geometry::{GridFunction, Scheme, TorusGrid};
pub use pde::Pde;
