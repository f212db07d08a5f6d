//! Pointwise differentiation of scalar and vector fields up to order four.
//!
//! Fields are written once against [`Jet`] arithmetic. Derivatives come from
//! (in order of preference) user-supplied analytic evaluators, Taylor-mode
//! propagation through the jet, or Richardson-extrapolated central
//! differences for fields that only expose a plain `f64` evaluator.

mod field;
mod jet;
mod poly;

pub use field::{
    eval_derivatives, eval_derivatives_with, lie_bracket, DerivativeBundle, DiffMethod,
    ScalarField, VectorField, MAX_ORDER,
};
pub use jet::{jet_determinant, Jet, JetSpace};
pub use poly::{Monomial, Polynomial};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("point {point:?} lies outside the field's domain")]
    Domain { point: Vec<f64> },
    #[error("derivative order {0} unsupported (maximum is 4)")]
    OrderUnsupported(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl DiffError {
    pub fn code(&self) -> &'static str {
        match self {
            DiffError::Domain { .. } => "domain_error",
            DiffError::OrderUnsupported(_) => "order_unsupported",
            DiffError::DimensionMismatch { .. } => "dimension_mismatch",
        }
    }
}
