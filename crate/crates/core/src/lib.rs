//! Periodic and two-point boundary value problems for `x' = A x + g(x) + u(t)`
//! with piecewise-constant inputs, solved by fixed-point and Newton iterations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bvp;
pub mod certificates;
pub mod error;
pub mod matops;
pub mod model;
pub mod newton;
pub mod oracle;
pub mod reactor;
pub mod simple;

pub use bvp::{boundary_matrices, BoundaryMatrixBundle, BvpProblem, DomainPolicy, Quadrature, ResidualReport};
pub use error::{Error, ErrorClass, Result};
pub use model::{
    BoundaryCondition, CallbackField, ControlSchedule, DomainBox, Grid, Matrix, Monomial, Nonlinearity,
    Polynomial, SystemModel, Trajectory, Vector, ZeroField,
};
pub use newton::{eval_second_derivative, solve_newton_classical, solve_newton_modified, PPrimeInverse};
pub use simple::{solve_simple, IterationOptions, IterationResult};
