//! Minority-class oversampling for imbalanced node classification.
//!
//! The pipeline synthesizes minority nodes by masked feature mixup driven by
//! integrated gradients, proposes edges for them, scores each candidate edge
//! by encoding an adaptively extracted enclosing subgraph with a multi-filter
//! (low-pass / high-pass / identity) message-passing network, and finally
//! trains a multi-filter node classifier on the rebalanced graph.

pub mod autodiff;
pub mod error;
pub mod experiment;
pub mod extract;
pub mod graph;
pub mod mixer;
pub mod net;
pub mod train;

pub use autodiff::{AdamState, Matrix, ParamId, ParamStore, Tape, TapeTensor};
pub use error::{Error, Result};
pub use graph::Graph;
