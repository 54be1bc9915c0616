//! Non-fatal conditions recorded while running the pipeline.
//!
//! Degenerate inputs (isolated neurons, constant eigenvectors, flat curves)
//! never abort a run; each fallback taken is pushed here and surfaces in the
//! final report.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Diagnostics(Vec<Diagnostic>);

impl Diagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, code: &str, message: impl Into<String>) {
        let message = message.into();
        log::debug!("{code}: {message}");
        self.0.push(Diagnostic { code: code.to_owned(), message });
    }

    pub fn extend(&mut self, other: Diagnostics) {
        self.0.extend(other.0);
    }

    pub fn has(&self, code: &str) -> bool {
        self.0.iter().any(|d| d.code == code)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Diagnostic> {
        self.0.iter()
    }
}

/// Codes used across the crate.
pub mod codes {
    pub const BMU_NO_NEIGHBORS: &str = "gng.insert_without_neighbors";
    pub const GNG_MAX_EPOCHS: &str = "gng.max_epochs_reached";
    pub const GNG_DEAD_UNITS: &str = "gng.dead_units_removed";
    pub const GNG_DUPLICATE_POINTS: &str = "gng.duplicate_points";
    pub const ELBOW_FLAT: &str = "gng.elbow_flat_curve";
    pub const SCALE_FALLBACK: &str = "graph.local_scale_global_fallback";
    pub const SCALE_FLOOR: &str = "graph.local_scale_floored";
    pub const ISOLATED_NODE: &str = "graph.isolated_node";
    pub const DBI_DEGENERATE: &str = "select.dbi_degenerate";
    pub const FD_ZERO_IQR: &str = "select.fd_zero_iqr";
    pub const SELECTION_FALLBACK: &str = "select.eigengap_fallback";
    pub const ZERO_VARIANCE: &str = "select.zero_variance";
    pub const KMEANS_DUPLICATES: &str = "cluster.duplicate_centroids";
    pub const KMEANS_DEGENERATE: &str = "cluster.degenerate_dbi";
    pub const TOO_FEW_NEURONS: &str = "pipeline.too_few_neurons";
    pub const SINGLE_CLUSTER: &str = "pipeline.single_cluster";
    pub const DOWNSAMPLED: &str = "image.downsampled";
}
