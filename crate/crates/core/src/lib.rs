//! Sparse linear graph learning.
//!
//! The crate builds parameter-free propagated feature matrices from a graph
//! and its node features, and trains a sparsely regularized multinomial
//! logistic regression on top of them. The main propagator concatenates four
//! orthogonalized blocks (structural SVD features, raw features, two-step
//! row-normalized aggregation and two-step symmetric aggregation with
//! self-loops); linearized GNN baselines and graph kernels share the same
//! classifier. A synthetic generator and a benchmark harness cover the
//! homophily / heterophily / uniform sanity scenarios.

pub mod baselines;
pub mod bench;
pub mod classifier;
pub mod dense;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod slimg;
pub mod synth;

pub use baselines::{propagate, BaselineKind, BaselineSpec};
pub use classifier::{fit, group_norms, predict, FitConfig, SparseLinearModel};
pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use graph::{normalize, normalized_laplacian, spmm, NormScheme, SparseGraph};
pub use slimg::{build_slimg_features, concat_blocks, PropagatedFeatures};
pub use synth::{gen_scenario, FeatureKind, ScenarioSpec, Structure, SyntheticDataset};
