//! De Giorgi machinery beyond the Hilbert gradient flow: state-dependent
//! convex dissipation potentials, GENERIC systems, and minimizing movements
//! in Euclidean-style metric spaces.

mod dissipation;
mod generic;
mod metric;

pub use dissipation::{
    gen_degiorgi_step, gen_euler_step, generalized_residual, run_generalized, DissipationPotential,
    GeneralizedKind,
};
pub use generic::{
    damped_oscillator, generic_step, run_generic, GenericRun, GenericSystem, StructureReport,
};
pub use metric::{
    metric_degiorgi_step, metric_euler_step, run_metric, slope_estimate_defect, validate_metric,
    MetricKind, MetricReport, MetricSpaceModel,
};

use crate::potentials::PotentialError;
use crate::solvers::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtensionError {
    #[error("dissipation exponent must exceed 1, got {0}")]
    BadExponent(f64),
    #[error("β must have a positive lower bound, got {0}")]
    BadBetaBound(f64),
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("increment leaves range(K): off-range component {0:.3e} exceeds 1e-6")]
    RangeViolation(f64),
    #[error("operation needs {0}")]
    Unsupported(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}
