use std::fmt;

use thiserror::Error;

/// Where a domain violation was detected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Point,
    Node { node: usize, iteration: Option<usize> },
    Time(f64),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Point => Ok(()),
            Location::Node { node, iteration: None } => write!(f, " at node {node}"),
            Location::Node { node, iteration: Some(k) } => {
                write!(f, " at node {node} of iteration {k}")
            }
            Location::Time(t) => write!(f, " at t = {t}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {coord} = {value} leaves the domain ({lower}, {upper}){at}")]
    DomainViolation {
        coord: usize,
        value: f64,
        lower: f64,
        upper: f64,
        at: Location,
    },

    #[error("time {t} outside the control interval [0, {tau}]")]
    TimeOutOfRange { t: f64, tau: f64 },

    #[error(
        "dominant linearization violated: boundary matrix is singular or ill-conditioned (rcond = {rcond:e})"
    )]
    DominantLinearization { rcond: f64 },

    #[error("matrix M_x of the linearized problem is singular (rcond = {rcond:e}); check the Neumann-series bound S < 1")]
    LinearizationSingular { rcond: f64 },

    #[error("{what} is singular or ill-conditioned (rcond = {rcond:e})")]
    Conditioning { what: &'static str, rcond: f64 },

    #[error("growth bound rejected: ||e^(tA)|| / (M e^(w|t|)) = {ratio} at t = {t}")]
    BoundRejected { t: f64, ratio: f64 },

    #[error("non-finite value encountered in {0}")]
    Divergence(String),

    #[error("grid mismatch: expected {expected} nodes, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("nonlinearity does not provide second derivatives")]
    HessianUnavailable,

    #[error("no convergence after {iterations} steps (defect {defect:e})")]
    NoConvergence { iterations: usize, defect: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Assumption,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DominantLinearization { .. }
            | Error::LinearizationSingular { .. }
            | Error::BoundRejected { .. } => ErrorClass::Assumption,
            Error::DomainViolation { .. }
            | Error::Conditioning { .. }
            | Error::Divergence(_)
            | Error::NoConvergence { .. } => ErrorClass::Numerical,
            Error::TimeOutOfRange { .. }
            | Error::GridMismatch { .. }
            | Error::HessianUnavailable
            | Error::InvalidInput(_) => ErrorClass::Usage,
        }
    }

    /// Attach a grid node and iteration index to a domain violation.
    pub(crate) fn at_node(self, node: usize, iteration: Option<usize>) -> Self {
        match self {
            Error::DomainViolation {
                coord,
                value,
                lower,
                upper,
                ..
            } => Error::DomainViolation {
                coord,
                value,
                lower,
                upper,
                at: Location::Node { node, iteration },
            },
            other => other,
        }
    }

    /// Tag a node-located domain violation with the iteration that produced it.
    pub(crate) fn in_iteration(self, k: usize) -> Self {
        match self {
            Error::DomainViolation {
                coord,
                value,
                lower,
                upper,
                at: Location::Node { node, .. },
            } => Error::DomainViolation {
                coord,
                value,
                lower,
                upper,
                at: Location::Node {
                    node,
                    iteration: Some(k),
                },
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
