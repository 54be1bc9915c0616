//! JSON reports and plot-data CSV exports.
//!
//! Eigenvectors are numbered from 1 in reports (the trivial vector is 1).
//! Timings are optional so that reports from identical runs are
//! byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::KCurveEntry;
use crate::config::{NeuronCount, RunConfig};
use crate::diag::Diagnostics;
use crate::error::{Error, Result};
use crate::gng::{ElbowCurve, GngModel};
use crate::image::ImageRun;
use crate::pipeline::{ClusterOutcome, PointRun, Timings};
use crate::select::SelectionResult;

/// Histograms never exceed this many bins.
pub const MAX_HISTOGRAM_BINS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Points,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub width: usize,
    pub height: usize,
    pub training_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GngInfo {
    pub m_requested: NeuronCount,
    pub m: usize,
    pub edges: usize,
    pub epochs: usize,
    pub converged: bool,
    pub components: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elbow: Option<ElbowCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub eigenvector: usize,
    pub lambda: f64,
    pub dbi_c2: f64,
    pub dbi_c3: f64,
    pub dbi_c4: f64,
    pub dbi_sum: f64,
    pub r: f64,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bins of `width` from the minimum value, the last one closed; widened when that would
    /// exceed [`MAX_HISTOGRAM_BINS`] or when `width` is not positive.
    pub fn new(values: &[f64], width: f64) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() || !(lo.is_finite() && hi.is_finite()) {
            return Self { start: 0.0, bin_width: 0.0, counts: Vec::new() };
        }
        let range = hi - lo;
        let mut width = width;
        if !(width > 0.0 && width.is_finite()) || range / width >= MAX_HISTOGRAM_BINS as f64 {
            width = if range > 0.0 { range / MAX_HISTOGRAM_BINS as f64 } else { 1.0 };
        }
        let bins = ((range / width).ceil() as usize).clamp(1, MAX_HISTOGRAM_BINS);
        let mut counts = vec![0; bins];
        for v in values {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
        Self { start: lo, bin_width: width, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionInfo {
    pub mu: f64,
    pub sigma: f64,
    pub fd_bin_width: f64,
    /// Chosen eigenvectors, numbered from 1.
    pub chosen: Vec<usize>,
    pub used_fallback: bool,
    /// Leading chosen eigenvectors kept after variance refinement.
    pub kept: usize,
    pub variance_ratios: Vec<f64>,
    pub histogram: Histogram,
}

impl From<&SelectionResult> for SelectionInfo {
    fn from(s: &SelectionResult) -> Self {
        let r: Vec<f64> = s.scores.iter().map(|e| e.r).collect();
        Self {
            mu: s.mu,
            sigma: s.sigma,
            fd_bin_width: s.fd_bin_width,
            chosen: s.chosen.iter().map(|i| i + 1).collect(),
            used_fallback: s.used_fallback,
            kept: s.kept,
            variance_ratios: s.variance_ratios.clone(),
            histogram: Histogram::new(&r, s.fd_bin_width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub kind: ReportKind,
    pub input: String,
    pub config: RunConfig,
    pub n: usize,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gng: Option<GngInfo>,
    pub eigenvalues: Vec<f64>,
    pub scores: Vec<ScoreRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionInfo>,
    pub k_curve: Vec<KCurveEntry>,
    pub chosen_k: usize,
    pub cluster_sizes: Vec<usize>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

fn score_rows(outcome: &ClusterOutcome) -> Vec<ScoreRow> {
    let Some(sel) = &outcome.selection else {
        return Vec::new();
    };
    sel.scores
        .iter()
        .map(|s| ScoreRow {
            eigenvector: s.index + 1,
            lambda: s.lambda,
            dbi_c2: s.dbi[0],
            dbi_c3: s.dbi[1],
            dbi_c4: s.dbi[2],
            dbi_sum: s.dbi_sum,
            r: s.r,
            chosen: sel.is_chosen(s.index),
        })
        .collect()
}

fn cluster_sizes(labels: &[usize]) -> Vec<usize> {
    let mut sizes = vec![0; labels.iter().max().map_or(0, |m| m + 1)];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

fn gng_info(m_requested: NeuronCount, model: &GngModel, epochs: usize, converged: bool, elbow: Option<ElbowCurve>) -> GngInfo {
    GngInfo {
        m_requested,
        m: model.len(),
        edges: model.edges.len(),
        epochs,
        converged,
        components: model.components().1,
        elbow,
    }
}

impl PipelineReport {
    pub fn from_points(input: &str, cfg: &RunConfig, points: &[Vec<f64>], run: &PointRun, timings: bool) -> Self {
        let o = &run.outcome;
        Self {
            kind: ReportKind::Points,
            input: input.to_owned(),
            config: cfg.clone(),
            n: points.len(),
            dim: points.first().map_or(0, Vec::len),
            image: None,
            gng: Some(gng_info(run.m_requested, &run.model, run.gng_epochs, run.gng_converged, run.elbow.clone())),
            eigenvalues: o.decomposition.eigenvalues.clone(),
            scores: score_rows(o),
            selection: o.selection.as_ref().map(SelectionInfo::from),
            k_curve: o.curve.as_ref().map(|c| c.entries.clone()).unwrap_or_default(),
            chosen_k: o.chosen_k,
            cluster_sizes: cluster_sizes(&run.point_labels),
            diagnostics: run.diagnostics.clone(),
            timings: timings.then(|| run.timings.clone()),
        }
    }

    pub fn from_image(input: &str, cfg: &RunConfig, run: &ImageRun, dim: usize, timings: bool) -> Self {
        let o = run.outcome.as_ref();
        Self {
            kind: ReportKind::Image,
            input: input.to_owned(),
            config: cfg.clone(),
            n: run.labels.labels.len(),
            dim,
            image: Some(ImageInfo {
                width: run.labels.width,
                height: run.labels.height,
                training_pixels: run.training_pixels,
            }),
            gng: run
                .model
                .as_ref()
                .map(|m| gng_info(run.m_requested, m, run.gng_epochs, run.gng_converged, None)),
            eigenvalues: o.map(|o| o.decomposition.eigenvalues.clone()).unwrap_or_default(),
            scores: o.map(score_rows).unwrap_or_default(),
            selection: o.and_then(|o| o.selection.as_ref()).map(SelectionInfo::from),
            k_curve: o.and_then(|o| o.curve.as_ref()).map(|c| c.entries.clone()).unwrap_or_default(),
            chosen_k: run.chosen_k,
            cluster_sizes: cluster_sizes(&run.labels.labels),
            diagnostics: run.diagnostics.clone(),
            timings: timings.then(|| run.timings.clone()),
        }
    }

    /// Paths to any non-finite number outside the echoed configuration.
    pub fn non_finite_fields(&self) -> Vec<String> {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("config");
        }
        let mut out = Vec::new();
        find_nulls(&value, "", &mut out);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Eigenvector relevance table as CSV.
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("eigenvector,lambda,dbi_c2,dbi_c3,dbi_c4,dbi_sum,r,chosen\n");
        for s in &self.scores {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.eigenvector, s.lambda, s.dbi_c2, s.dbi_c3, s.dbi_c4, s.dbi_sum, s.r, s.chosen
            ));
        }
        out
    }

    /// Self-tuning curve as CSV.
    pub fn k_curve_csv(&self) -> String {
        let mut out = String::from("k,dbi,lambda_sum,r\n");
        for e in &self.k_curve {
            out.push_str(&format!("{},{},{},{}\n", e.k, e.dbi, e.lambda_sum, e.r));
        }
        out
    }
}

// serde_json writes NaN and infinities as null; every optional field is
// skipped when absent, so a null can only be a non-finite number.
fn find_nulls(v: &serde_json::Value, path: &str, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Null => out.push(path.to_owned()),
        serde_json::Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                find_nulls(item, &format!("{path}[{i}]"), out);
            }
        }
        serde_json::Value::Object(map) => {
            for (k, item) in map {
                find_nulls(item, &format!("{path}.{k}"), out);
            }
        }
        _ => {}
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pred: String,
    pub gt: String,
    pub n: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    pub chosen_k: usize,
    pub chosen_eigenvectors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub runs: usize,
    /// Number of runs per chosen k.
    pub k_counts: BTreeMap<usize, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub input: String,
    pub config: RunConfig,
    pub runs: Vec<SweepRun>,
    pub summary: SweepSummary,
}

impl SweepSummary {
    pub fn new(runs: &[SweepRun]) -> Self {
        let mut k_counts = BTreeMap::new();
        for r in runs {
            *k_counts.entry(r.chosen_k).or_insert(0) += 1;
        }
        let acc: Vec<f64> = runs.iter().filter_map(|r| r.accuracy).collect();
        let (mean, std, min) = if acc.is_empty() {
            (None, None, None)
        } else {
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            (Some(mean), Some(var.sqrt()), Some(acc.iter().copied().fold(f64::INFINITY, f64::min)))
        };
        Self { runs: runs.len(), k_counts, mean_accuracy: mean, std_accuracy: std, min_accuracy: min }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins() {
        // The maximum closes the last bin.
        let h = Histogram::new(&[0.0, 0.1, 0.3, 1.0], 0.25);
        assert_eq!(h.counts, vec![2, 1, 0, 1]);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        let capped = Histogram::new(&[0.0, 1.0], 1e-9);
        assert_eq!(capped.counts.len(), MAX_HISTOGRAM_BINS);
        assert_eq!(capped.counts.iter().sum::<usize>(), 2);
        let flat = Histogram::new(&[3.0, 3.0], 0.0);
        assert_eq!(flat.counts, vec![2]);
        assert!(Histogram::new(&[], 1.0).counts.is_empty());
    }

    #[test]
    fn sweep_summary() {
        let runs = [
            SweepRun { seed: 0, chosen_k: 3, chosen_eigenvectors: 2, accuracy: Some(1.0) },
            SweepRun { seed: 1, chosen_k: 2, chosen_eigenvectors: 1, accuracy: Some(0.5) },
        ];
        let s = SweepSummary::new(&runs);
        assert_eq!(s.k_counts, BTreeMap::from([(2, 1), (3, 1)]));
        assert_eq!((s.mean_accuracy, s.std_accuracy, s.min_accuracy), (Some(0.75), Some(0.25), Some(0.5)));
    }

    #[test]
    fn point_report_is_finite_and_stable() {
        let data = crate::synth::generate(&crate::synth::SyntheticSpec::three_blobs(60, 0.3), 2).unwrap();
        let cfg = RunConfig { seed: 2, ..RunConfig::default() };
        let run = crate::pipeline::cluster_points(&data.points, &cfg).unwrap();
        let report = PipelineReport::from_points("blobs.csv", &cfg, &data.points, &run, false);
        assert!(report.non_finite_fields().is_empty());
        assert_eq!(report.cluster_sizes.iter().sum::<usize>(), 180);
        assert!(report.scores.iter().all(|s| s.eigenvector >= 2));
        let again = crate::pipeline::cluster_points(&data.points, &cfg).unwrap();
        let a = serde_json::to_string(&report).unwrap();
        let b = serde_json::to_string(&PipelineReport::from_points("blobs.csv", &cfg, &data.points, &again, false)).unwrap();
        assert_eq!(a, b);
        assert_eq!(report.scores_csv().lines().count(), report.scores.len() + 1);
        assert_eq!(report.k_curve_csv().lines().count(), report.k_curve.len() + 1);
    }

    #[test]
    fn nan_is_detected() {
        let data = crate::synth::generate(&crate::synth::SyntheticSpec::three_blobs(30, 0.3), 1).unwrap();
        let cfg = RunConfig::default();
        let run = crate::pipeline::cluster_points(&data.points, &cfg).unwrap();
        let mut report = PipelineReport::from_points("x", &cfg, &data.points, &run, false);
        report.eigenvalues[1] = f64::NAN;
        assert_eq!(report.non_finite_fields(), vec![".eigenvalues[1]".to_string()]);
    }
}
