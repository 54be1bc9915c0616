//! Partition comparison metrics: foreground F-measure, segmentation
//! covering, probabilistic Rand index, variation of information and
//! best-match clustering accuracy.
//!
//! All metrics take two label sequences over the same elements (pixels in
//! row-major order, or points) and are invariant to relabeling either side.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint counts of (predicted, reference) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    pub pred_labels: Vec<usize>,
    pub true_labels: Vec<usize>,
    /// `counts[i][j]` = elements with predicted label `pred_labels[i]` and
    /// reference label `true_labels[j]`.
    pub counts: Vec<Vec<u64>>,
    pub pred_sizes: Vec<u64>,
    pub true_sizes: Vec<u64>,
    pub total: u64,
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch { expected: truth.len(), actual: pred.len() });
        }
        let index = |labels: &[usize]| {
            let uniq: BTreeMap<usize, usize> =
                labels.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().enumerate().map(|(i, l)| (l, i)).collect();
            uniq
        };
        let pi = index(pred);
        let ti = index(truth);
        let mut counts = vec![vec![0u64; ti.len()]; pi.len()];
        for (p, t) in pred.iter().zip(truth) {
            counts[pi[p]][ti[t]] += 1;
        }
        let pred_sizes = counts.iter().map(|r| r.iter().sum()).collect();
        let true_sizes = (0..ti.len()).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            pred_labels: pi.keys().copied().collect(),
            true_labels: ti.keys().copied().collect(),
            counts,
            pred_sizes,
            true_sizes,
            total: pred.len() as u64,
        })
    }
}

fn require_nonempty(pred: &[usize]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::invalid("cannot evaluate empty partitions"));
    }
    Ok(())
}

/// F-measure of the foreground class.
///
/// `gt_foreground[i]` marks reference foreground. A predicted segment counts
/// as foreground when more of its elements fall on reference foreground than
/// on background.
pub fn f_measure_foreground(pred: &[usize], gt_foreground: &[bool]) -> Result<f64> {
    if pred.len() != gt_foreground.len() {
        return Err(Error::DimensionMismatch { expected: gt_foreground.len(), actual: pred.len() });
    }
    let mut overlap: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for (&p, &fg) in pred.iter().zip(gt_foreground) {
        let e = overlap.entry(p).or_default();
        if fg {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let (mut tp, mut predicted) = (0u64, 0u64);
    for &(fg, bg) in overlap.values() {
        if fg > bg {
            tp += fg;
            predicted += fg + bg;
        }
    }
    let actual = gt_foreground.iter().filter(|&&f| f).count() as u64;
    let precision = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
    let recall = if actual > 0 { tp as f64 / actual as f64 } else { 0.0 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Covering of the reference by the prediction:
/// `(1/N) sum_{R in gt} |R| max_{R' in pred} |R ∩ R'| / |R ∪ R'|`.
pub fn segmentation_covering(pred: &[usize], gt: &[usize]) -> Result<f64> {
    require_nonempty(pred)?;
    let c = Contingency::new(pred, gt)?;
    let mut total = 0.0;
    for (j, &size) in c.true_sizes.iter().enumerate() {
        let best = (0..c.pred_sizes.len())
            .map(|i| {
                let inter = c.counts[i][j];
                let union = c.pred_sizes[i] + size - inter;
                inter as f64 / union as f64
            })
            .fold(0.0, f64::max);
        total += size as f64 * best;
    }
    Ok(total / c.total as f64)
}

fn pairs(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Rand index: share of element pairs on which the two partitions agree.
pub fn pri(pred: &[usize], gt: &[usize]) -> Result<f64> {
    if pred.len() < 2 {
        return Err(Error::invalid("Rand index needs at least two elements"));
    }
    let c = Contingency::new(pred, gt)?;
    let total = pairs(c.total);
    let same_both: u128 = c.counts.iter().flatten().map(|&n| pairs(n)).sum();
    let same_pred: u128 = c.pred_sizes.iter().map(|&n| pairs(n)).sum();
    let same_true: u128 = c.true_sizes.iter().map(|&n| pairs(n)).sum();
    let agree = total + 2 * same_both - same_pred - same_true;
    Ok(agree as f64 / total as f64)
}

/// Variation of information `H(pred) + H(gt) - 2 I(pred; gt)` in nats.
///
/// Summed per cell as `p_ij (ln(n_i / n_ij) + ln(n_j / n_ij))`: every term is
/// non-negative and identical partitions give exactly zero.
pub fn vi(pred: &[usize], gt: &[usize]) -> Result<f64> {
    require_nonempty(pred)?;
    let c = Contingency::new(pred, gt)?;
    let n = c.total as f64;
    let mut total = 0.0;
    for (i, row) in c.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                let cond = (c.pred_sizes[i] as f64 / nij).ln() + (c.true_sizes[j] as f64 / nij).ln();
                total += nij / n * cond;
            }
        }
    }
    Ok(total)
}

/// Maximum-weight assignment of rows to columns (Hungarian algorithm on the
/// negated, zero-padded square matrix). Returns the column chosen for each
/// row (or `None` for padding).
pub fn max_weight_matching(weights: &[Vec<u64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let max = weights.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost = |i: usize, j: usize| -> i64 {
        let w = if i < rows && j < cols { weights[i][j] as i64 } else { 0 };
        max - w
    };
    // 1-based potentials formulation.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![None; rows];
    for (j, &i) in p.iter().enumerate().skip(1) {
        if i >= 1 && i <= rows && j <= cols {
            assignment[i - 1] = Some(j - 1);
        }
    }
    assignment
}

/// Best-match accuracy: the largest fraction of elements labelled correctly
/// under a one-to-one matching of predicted to true labels.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    require_nonempty(pred)?;
    let c = Contingency::new(pred, truth)?;
    let matching = max_weight_matching(&c.counts);
    let correct: u64 = matching
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| c.counts[i][j]))
        .sum();
    Ok(correct as f64 / c.total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FMeasure,
    Covering,
    Pri,
    Vi,
    Accuracy,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::FMeasure, Metric::Covering, Metric::Pri, Metric::Vi, Metric::Accuracy];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FMeasure => "f_measure",
            Metric::Covering => "covering",
            Metric::Pri => "pri",
            Metric::Vi => "vi",
            Metric::Accuracy => "accuracy",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "f" | "f_measure" | "fmeasure" => Ok(Metric::FMeasure),
            "covering" => Ok(Metric::Covering),
            "pri" => Ok(Metric::Pri),
            "vi" => Ok(Metric::Vi),
            "accuracy" | "acc" => Ok(Metric::Accuracy),
            _ => Err(format!("unknown metric {s:?}")),
        }
    }
}

/// Computes the requested metrics; the F-measure treats every non-zero
/// reference label as foreground.
pub fn evaluate(pred: &[usize], gt: &[usize], metrics: &[Metric]) -> Result<BTreeMap<String, f64>> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch { expected: gt.len(), actual: pred.len() });
    }
    let mut out = BTreeMap::new();
    for &m in metrics {
        let v = match m {
            Metric::FMeasure => {
                let fg: Vec<bool> = gt.iter().map(|&l| l != 0).collect();
                f_measure_foreground(pred, &fg)?
            }
            Metric::Covering => segmentation_covering(pred, gt)?,
            Metric::Pri => pri(pred, gt)?,
            Metric::Vi => vi(pred, gt)?,
            Metric::Accuracy => clustering_accuracy(pred, gt)?,
        };
        out.insert(m.name().to_owned(), v);
    }
    Ok(out)
}
