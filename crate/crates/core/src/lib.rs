//! Sampling-accelerated spectral clustering for tabular trait data.
//!
//! The pipeline clusters large trait tables by clustering only a sample:
//! deviation-weighted pivotal sampling picks N representative units, a dense
//! exp(−d) similarity graph over the sample feeds a graph-Laplacian spectral
//! embedding, k-means labels the sampled units, and every remaining unit is
//! reverse-mapped to the cluster with the highest average similarity.
//! Baselines (vector-quantization sampling, agglomerative hierarchical
//! clustering), survey estimators (Horvitz-Thompson, Hájek) and silhouette
//! validation round out the toolkit.
//!
//! `pipeline::run_pipeline` is the programmatic entry point mirroring the
//! `phenoclust` binary; the individual stages live in their own modules and
//! compose freely.

pub mod assign;
pub mod error;
pub mod hclust;
pub mod ingest;
pub mod pipeline;
pub mod sampling;
pub mod simgraph;
pub mod spectral;
pub mod synth;
pub mod validate;

pub use error::{Error, Result};
