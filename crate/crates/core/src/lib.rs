//! Graph neural networks trained on augmented views that swap output channels
//! with each other, guided by the entropy of their weights.
//!
//! The crate is layered bottom-up: [`graph`] and [`augment`] prepare inputs,
//! [`nn`] trains a GCN, [`exchange`] moves channels between trained models,
//! and [`pipeline`] strings these into experiments. [`io`] and [`cli`] read
//! dataset bundles and write result tables.

pub mod augment;
pub mod cli;
pub mod exchange;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod synthetic;

pub use graph::{build_graph, Graph, NormalizedAdjacency, Splits};
pub use linalg::{CsrMatrix, Matrix};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/views.md")]
    mod views {}
    #[doc = include_str!("../../../book/src/exchange.md")]
    mod exchange {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
