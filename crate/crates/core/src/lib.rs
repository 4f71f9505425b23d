//! Stochastic quasi-Newton optimization with spectrum-controlled L-BFGS
//! memory, noisy oracles, built-in test problems and complexity bounds.

// NaN must fail the positivity checks, so they are written as negations.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod lbfgs;
pub mod linalg;
pub mod oracle;
pub mod problems;
pub mod solver;
pub mod theory;
