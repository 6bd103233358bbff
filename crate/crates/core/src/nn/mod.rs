//! Small reverse-mode differentiation core: batched dense layers, a GRU
//! cell, Adam, and a central-difference gradient checker. Everything is
//! `f64`.

mod adam;
mod gradcheck;
mod layers;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::finite_diff_check;
pub use layers::{dense_forward, row, Activation, Dense, GruCell, Mlp};
pub use params::{Grads, Param, ParamId, ParamStore};
pub use tape::{Gradients, NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("loss must be a 1x1 scalar, got shape {0:?}")]
    NotScalar((usize, usize)),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
}

#[cfg(test)]
mod tests;
