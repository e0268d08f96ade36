//! Distillation of control policies into interpretable models.
//!
//! An expert controller is imitated with a DAgger loop whose expert/learner
//! alternation ratio shrinks episode by episode. The learned policy is one
//! of three families: gradient-boosted tree ensembles ([`gbm`]), explainable
//! boosting machines ([`ebm`]) or evolved symbolic expressions ([`symreg`]).
//! [`importance`] and [`report`] turn fitted policies into importance maps,
//! partial dependence curves, local explanations and reward sweeps.

pub mod cli;
pub mod dataset;
pub mod distill;
pub mod error;
pub mod ebm;
pub mod envs;
pub mod gbm;
pub mod importance;
pub mod metrics;
pub mod model;
pub mod report;
pub mod symreg;
pub mod trees;
pub mod types;

pub use error::{Error, Result};
