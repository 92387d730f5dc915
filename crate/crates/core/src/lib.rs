//! Sparse-state simulation of a remote CONTROL-NOT gate on an Ising
//! nuclear-spin chain addressed by a graded magnetic field.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases at the crate root fix it to `f64`, which
//! is what the experiments and the command-line tool use.

// `!(x > 0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod chain;
pub mod checks;
pub mod engine;
pub mod error;
pub mod io;
pub mod oracles;
pub mod scalar;
pub mod sequence;

pub use basis::BasisState;
pub use error::{Error, Result};
pub use scalar::Real;

pub type ChainParams64 = chain::ChainParams<f64>;
pub type Pulse64 = engine::Pulse<f64>;
pub type SparseState64 = engine::SparseState<f64>;
pub type EngineConfig64 = engine::EngineConfig<f64>;
pub type PulseSequence64 = sequence::PulseSequence<f64>;
pub type RunReport64 = analysis::RunReport<f64>;
pub type RunSetup64 = analysis::RunSetup<f64>;
pub type SweepRow64 = analysis::SweepRow<f64>;
