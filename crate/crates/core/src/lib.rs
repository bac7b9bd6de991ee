//! Numerical toolkit for global inversion of nonlinear maps.
//!
//! A map `f` is inverted at a target `y` by minimizing the auxiliary functional
//! `φ(x) = η(f(x) − y)`, where `η` vanishes only at the origin. The crate
//! provides:
//!
//! * sampling certificates for the growth and Jacobian hypotheses that make
//!   `x ↦ Ax − F(x)` a global diffeomorphism ([`hypothesis`], [`algebraic`]);
//! * a Gauss–Newton / gradient-descent minimizer of `φ` with a multistart
//!   uniqueness surrogate ([`solver`]);
//! * exponentially weighted (Bielecki) norms on grid functions vanishing at
//!   zero, with the associated inequality suite ([`bielecki`]);
//! * two solvers for the initial-value problem
//!   `x′(t) + ∫₀ᵗ Φ(t, τ, x(τ)) dτ = y(t)`, `x(0) = 0` ([`volterra`]);
//! * a command-line front end producing JSON reports ([`cli`]).

// `!(a > b)` comparisons deliberately treat NaN as a failure
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebraic;
pub mod bielecki;
pub mod cli;
pub mod error;
pub mod eta;
pub mod grid;
pub mod hypothesis;
pub mod map;
pub mod quadrature;
pub mod sampling;
pub mod solver;
pub mod volterra;

pub use error::{Error, Result};
pub use eta::{NormalizationFunctional, PowerNorm, Quadratic};
pub use grid::GridFunction;
pub use map::{FnMap, NonlinearMap};
