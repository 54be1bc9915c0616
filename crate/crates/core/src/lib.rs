//! Approximate spectral clustering on a growing neural gas, with automatic
//! eigenvector selection and a self-tuned number of clusters.
//!
//! The pipeline trains a GNG on the input features, weights its edges with a
//! locally scaled Gaussian kernel, decomposes the normalized symmetric
//! Laplacian, keeps the eigenvectors whose relevance score stands out, and
//! picks k by minimising the Davies–Bouldin index plus the running sum of
//! eigenvalues. Image segmentation and partition-comparison metrics are
//! built on top.

pub mod cluster;
pub mod config;
pub mod diag;
pub mod error;
pub mod eval;
pub mod gng;
pub mod graph;
pub mod image;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod report;
pub mod select;
pub mod synth;

pub use config::{FeatureMode, NeuronCount, RunConfig};
pub use diag::{Diagnostic, Diagnostics};
pub use error::{Error, Result, Stage};
pub use gng::{GngModel, GngParams};
pub use linalg::{Matrix, SpectralDecomposition, SymMatrix};
pub use pipeline::{cluster_model, cluster_points, ClusterOutcome, PointRun, SpectralConfig};
