//! The spectral stage on a trained GNG (scales, affinity, Laplacian,
//! eigenvector selection, self-tuned k) and the end-to-end point pipeline.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, seed_for_k, r_k_curve, KSelectionCurve};
use crate::config::{NeuronCount, RunConfig};
use crate::diag::{codes, Diagnostics};
use crate::error::{Error, Result, Stage, StageExt};
use crate::gng::{nearest_neuron, select_m_elbow, train, ElbowCurve, GngModel};
use crate::graph::{affinity, local_scales, normalized_laplacian, spectrum, AffinityMatrix, LocalScales};
use crate::linalg::SpectralDecomposition;
use crate::select::{relevance_scores, select_eigenvectors, RefineMode, SelectionResult};

/// Settings for the spectral stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConfig {
    pub local_scale_k: usize,
    pub variance_threshold: f64,
    pub refine_mode: RefineMode,
    pub k_max: usize,
    pub seed: u64,
}

impl From<&RunConfig> for SpectralConfig {
    fn from(c: &RunConfig) -> Self {
        Self {
            local_scale_k: c.local_scale_k,
            variance_threshold: c.variance_threshold,
            refine_mode: c.refine_mode,
            k_max: c.k_max,
            seed: c.seed,
        }
    }
}

impl Default for SpectralConfig {
    fn default() -> Self {
        (&RunConfig::default()).into()
    }
}

/// Everything the spectral stage produced for one model.
#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    /// Cluster label per neuron, dense in `0..chosen_k`.
    pub labels: Vec<usize>,
    pub chosen_k: usize,
    pub curve: Option<KSelectionCurve>,
    pub selection: Option<SelectionResult>,
    pub affinity: AffinityMatrix,
    pub decomposition: SpectralDecomposition,
    pub sigma: Vec<f64>,
    pub graph_components: usize,
}

/// Relabels so labels appear as 0, 1, 2, ... in order of first occurrence.
pub fn densify_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Runs scales → affinity → L_sym → spectrum → selection → R_k on a model.
pub fn cluster_model(model: &GngModel, cfg: &SpectralConfig, diag: &mut Diagnostics) -> Result<ClusterOutcome> {
    let m = model.len();
    if m == 0 {
        return Err(Error::invalid("model has no neurons")).stage(Stage::Graph);
    }
    let scales = if m == 1 {
        LocalScales { sigma: vec![1.0] }
    } else {
        local_scales(model, cfg.local_scale_k.min(m - 1), diag).stage(Stage::Graph)?
    };
    let a = affinity(model, &scales).stage(Stage::Graph)?;
    let lap = normalized_laplacian(&a, diag).stage(Stage::Graph)?;
    let decomposition = spectrum(&lap).stage(Stage::Spectrum)?;
    let (_, graph_components) = model.components();

    if m < 5 {
        diag.push(
            codes::TOO_FEW_NEURONS,
            format!("{m} neurons are too few for eigenvector scoring; using graph components"),
        );
        let (labels, k) = densify_labels(&model.components().0);
        return Ok(ClusterOutcome {
            labels,
            chosen_k: k,
            curve: None,
            selection: None,
            affinity: a,
            decomposition,
            sigma: scales.sigma,
            graph_components,
        });
    }

    let scores = relevance_scores(&decomposition, diag).stage(Stage::Selection)?;
    let k_max = cfg.k_max.min(m);
    let mut selection = select_eigenvectors(&scores, &decomposition, k_max, diag).stage(Stage::Selection)?;
    selection.refine(cfg.variance_threshold, cfg.refine_mode, diag).stage(Stage::Selection)?;

    let curve =
        r_k_curve(&selection.x_star, &decomposition.eigenvalues, 2, k_max, cfg.seed, diag).stage(Stage::Clustering)?;
    let chosen_k = curve.chosen_k;
    let km = kmeans(&selection.x_star, chosen_k, seed_for_k(cfg.seed, chosen_k), &mut Diagnostics::new())
        .stage(Stage::Clustering)?;
    let (labels, found) = densify_labels(&km.labels);
    if found < chosen_k {
        diag.push(codes::KMEANS_DUPLICATES, format!("k-means at k={chosen_k} produced only {found} clusters"));
    }
    Ok(ClusterOutcome {
        labels,
        chosen_k,
        curve: Some(curve),
        selection: Some(selection),
        affinity: a,
        decomposition,
        sigma: scales.sigma,
        graph_components,
    })
}

/// Label of each point's nearest neuron.
pub fn assign_to_neurons(model: &GngModel, neuron_labels: &[usize], points: &[Vec<f64>]) -> Vec<usize> {
    points.par_iter().map(|p| neuron_labels[nearest_neuron(model, p).0]).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub elbow_ms: f64,
    pub gng_ms: f64,
    pub spectral_ms: f64,
    pub assignment_ms: f64,
    pub total_ms: f64,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone)]
pub struct PointRun {
    pub m_requested: NeuronCount,
    pub elbow: Option<ElbowCurve>,
    pub model: GngModel,
    pub gng_epochs: usize,
    pub gng_converged: bool,
    pub outcome: ClusterOutcome,
    pub point_labels: Vec<usize>,
    pub diagnostics: Diagnostics,
    pub timings: Timings,
}

/// Full pipeline on point data: (elbow m) → GNG → spectral stage → per-point labels.
pub fn cluster_points(points: &[Vec<f64>], cfg: &RunConfig) -> Result<PointRun> {
    cfg.validate().stage(Stage::Input)?;
    let start = Instant::now();
    let mut diag = Diagnostics::new();
    let mut timings = Timings::default();

    if points.is_empty() {
        return Err(Error::invalid("no data points")).stage(Stage::Input);
    }
    if points.iter().all(|p| p == &points[0]) {
        return single_point_run(points, cfg, diag, start);
    }

    let t = Instant::now();
    let (m_target, elbow) = match cfg.m {
        NeuronCount::Fixed(m) => (m, None),
        NeuronCount::Auto => {
            let curve = select_m_elbow(points, &cfg.elbow_candidates, cfg.seed, &mut diag).stage(Stage::Gng)?;
            (curve.chosen, Some(curve))
        }
    };
    timings.elbow_ms = ms(t);

    let t = Instant::now();
    let training = train(points, &cfg.gng_params(m_target)).stage(Stage::Gng)?;
    diag.extend(training.diagnostics);
    timings.gng_ms = ms(t);

    let t = Instant::now();
    let outcome = cluster_model(&training.model, &cfg.into(), &mut diag)?;
    timings.spectral_ms = ms(t);

    let t = Instant::now();
    let point_labels = assign_to_neurons(&training.model, &outcome.labels, points);
    timings.assignment_ms = ms(t);
    timings.total_ms = ms(start);

    Ok(PointRun {
        m_requested: cfg.m,
        elbow,
        model: training.model,
        gng_epochs: training.epochs,
        gng_converged: training.converged,
        outcome,
        point_labels,
        diagnostics: diag,
        timings,
    })
}

/// Every point coincides: one neuron, one cluster.
fn single_point_run(points: &[Vec<f64>], cfg: &RunConfig, mut diag: Diagnostics, start: Instant) -> Result<PointRun> {
    if points[0].is_empty() || points[0].iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("data points must be finite and non-empty")).stage(Stage::Input);
    }
    diag.push(
        codes::GNG_DUPLICATE_POINTS,
        format!("all {} points are identical; a single neuron represents them", points.len()),
    );
    let model = GngModel::from_positions(vec![points[0].clone()]);
    let outcome = cluster_model(&model, &cfg.into(), &mut diag)?;
    diag.push(codes::SINGLE_CLUSTER, "one cluster");
    let timings = Timings { total_ms: ms(start), ..Timings::default() };
    Ok(PointRun {
        m_requested: cfg.m,
        elbow: None,
        model,
        gng_epochs: 0,
        gng_converged: true,
        point_labels: vec![0; points.len()],
        outcome,
        diagnostics: diag,
        timings,
    })
}
