//! Newton iterations for time-dependent second-order mean field games on the
//! periodic torus, with semi-Lagrangian and implicit finite-difference
//! linearized steps.

// NaN must fail parameter checks, and stencil loops read clearer with indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod expr;
pub mod fd;
pub mod linear;
pub mod newton;
pub mod problem;
pub mod props;
pub mod sl;
pub mod sparse;
pub mod torus;

pub use error::{MfgError, Result};
pub use exec::Execution;
pub use problem::{builtin_problem, MfgProblem, ProblemId};
pub use sparse::SparseOperator;
pub use torus::{DriftField, Field, GridSpec, SpaceTimeField};
