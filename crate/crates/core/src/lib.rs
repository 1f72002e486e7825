//! Exact dynamic programming for finite-horizon convex stochastic optimization
//! on scenario trees.

pub mod linalg;
pub mod oracle;
pub mod polyhedra;
pub mod rational;
pub mod dp;
pub mod error;
pub mod finance;
pub mod instances;
pub mod quad;
pub mod tree;

pub use error::DpError;
