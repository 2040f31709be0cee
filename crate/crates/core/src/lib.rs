//! Feature learning over constrained linear projections.
//!
//! The search looks for projections of a tabular dataset whose k-NN graphs
//! differ as much as possible from each other, then lays each graph out in
//! 2-D and groups the results.

pub mod datagen;
pub mod dissim;
mod eigen;
pub mod embed;
pub mod engine;
pub mod error;
pub mod interpret;
pub mod io;
pub mod knn;
pub mod manifold;
pub mod optimizer;
pub mod preprocess;
pub mod types;

pub use dissim::{nd, nsd, sd, GraphProfile, NetlsdSignature, Timescales};
pub use embed::Embedding2D;
pub use engine::{fealm_run, run_pipeline};
pub use error::{FealmError, Result};
pub use knn::{build_knn_graph, symmetrize, KnnGraph, UndirectedGraph};
pub use manifold::{ProjectionFamily, ProjectionSpec};
pub use types::*;
