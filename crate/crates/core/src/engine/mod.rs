//! Demand-driven evaluation with a value warehouse.
//!
//! [`eval`] computes an expression at a context, consulting the warehouse on
//! every identifier so each `(identifier, context)` pair is computed at most
//! once. [`naive_eval`] has the same semantics without memoization and is
//! kept as a reference implementation.

mod eval;
mod naive;
mod warehouse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lucid::Pos;

pub use eval::{eval, execute, execute_with, EngineConfig, EvalStats, Evaluator, Resolver};
pub use naive::{naive_eval, NaiveEvaluator};
pub use warehouse::{Warehouse, WarehouseStats};

/// Evaluation result. Booleans are 1/0.
pub type Value = i64;

pub const DEFAULT_MAX_DEPTH: usize = 100_000;

/// Coarse classification of evaluation failures, used to compare outcomes
/// across evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    DivisionByZero,
    ModuloByZero,
    UnresolvedIdentifier,
    UnresolvedDimension,
    DepthExceeded,
    Cyclic,
    Suspended,
    /// The demand fabric could not produce a value.
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero at {pos}")]
    DivisionByZero { pos: Pos },
    #[error("modulo by zero at {pos}")]
    ModuloByZero { pos: Pos },
    #[error("couldn't resolve the identifier symbol #{id}")]
    UnresolvedIdentifier { id: usize },
    #[error("cannot resolve dimension symbol `{0}`")]
    UnresolvedDimension(String),
    #[error("recursion depth exceeded limit of {limit}")]
    DepthExceeded { limit: usize },
    #[error("cyclic demand on {signature}")]
    Cyclic { signature: String },
    /// The value of an identifier has been demanded from a store and is not
    /// available yet. Only produced by remote resolvers.
    #[error("waiting on demand {signature}")]
    Suspended { signature: String },
    /// A failure reported by another evaluator, e.g. a failed sub-demand.
    #[error("{message}")]
    Failed { class: ErrorClass, message: String },
}

impl EvalError {
    pub fn class(&self) -> ErrorClass {
        match self {
            EvalError::DivisionByZero { .. } => ErrorClass::DivisionByZero,
            EvalError::ModuloByZero { .. } => ErrorClass::ModuloByZero,
            EvalError::UnresolvedIdentifier { .. } => ErrorClass::UnresolvedIdentifier,
            EvalError::UnresolvedDimension(_) => ErrorClass::UnresolvedDimension,
            EvalError::DepthExceeded { .. } => ErrorClass::DepthExceeded,
            EvalError::Cyclic { .. } => ErrorClass::Cyclic,
            EvalError::Suspended { .. } => ErrorClass::Suspended,
            EvalError::Failed { class, .. } => *class,
        }
    }
}
