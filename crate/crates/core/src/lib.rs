//! Head-lexicalized bidirectional constituency Tree LSTMs.
//!
//! The crate bundles everything needed to train and inspect the models:
//!
//! - [`autodiff`]: a small define-by-run reverse-mode engine,
//! - [`treebank`]: bracketed trees, TREC lines, embedding tables,
//! - [`seq_lstm`], [`bottomup_tree`], [`topdown_tree`]: the three encoders,
//! - [`model`]: variants, classifier, objective, training, checkpoints,
//! - [`analysis`]: head extraction and bucketed accuracy,
//! - [`reranker`]: the constituent scorer used for k-best reranking,
//! - [`diagnostics`]: random trees, gradient checks, a toy corpus.

pub mod analysis;
pub mod autodiff;
pub mod bottomup_tree;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod reranker;
pub mod seq_lstm;
pub mod topdown_tree;
pub mod treebank;

pub use error::{Error, Result};
