//! Symbolic regression by genetic programming.

mod evolve;
mod expr;

pub use evolve::{evolve, select_policy_expression, ArchiveEntry, EvolutionResult, GpParams, ParetoArchive};
pub use expr::{BinaryOp, ComplexityLimits, Node, SymbolicExpression, UnaryOp};
