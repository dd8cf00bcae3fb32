//! Reverse-mode automatic differentiation over dense vectors and matrices.
//!
//! A [`Graph`] is rebuilt for every example (tree shapes differ per input)
//! and borrows the model's [`ParamSet`] read-only, so several graphs can be
//! evaluated concurrently against the same parameters. Backward returns a
//! [`Gradients`] value; folding it into parameters is left to the caller.

mod check;
mod graph;
mod tensor;

pub use check::{grad_check, relative_error, GradCheckReport, DEFAULT_EPS};
pub use graph::{Graph, Primitive, Var};
pub use tensor::{Gradients, ParamId, ParamKind, ParamSet, Tensor};

use crate::error::{Error, Result};

/// Log-probabilities of a non-empty logit vector, max-shifted for stability.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Invalid("log_softmax of an empty vector".into()));
    }
    Ok(graph::log_softmax_slice(logits))
}

#[cfg(test)]
pub(crate) use graph::sigmoid;
