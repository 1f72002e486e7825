//! Errors shared by the DP engine, the model builders and the oracle.

use thiserror::Error;

use crate::polyhedra::PolyError;
use crate::rational::{format_vector, Rational};
use crate::tree::TreeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("linearity condition fails at node `{node}`: direction {} is cost-free but its negative is not", format_vector(.witness))]
    LinearityViolated { node: String, witness: Vec<Rational> },
    #[error("partial minimization at node `{node}` is unbounded below along {}", format_vector(.ray))]
    UnboundedBelow { node: String, ray: Vec<Rational> },
    #[error("problem is infeasible (optimal value +inf)")]
    Infeasible,
    #[error("lower-bound certificate fails at node `{node}`")]
    LowerBoundViolated { node: String },
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}
