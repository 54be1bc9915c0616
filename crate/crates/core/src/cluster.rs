//! Clustering in the embedding space: seeded k-means++ / Lloyd, the
//! multivariate Davies–Bouldin index, the self-tuning `R_k` curve and the
//! eigengap baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diag::{codes, Diagnostics};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Value substituted for a Davies–Bouldin index that is undefined because
/// two cluster centroids coincide.
pub const DBI_SENTINEL: f64 = 1e6;

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_RESTARTS: usize = 10;

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { restarts: KMEANS_RESTARTS, max_iter: KMEANS_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
}

/// One Lloyd run from fixed initial centroids.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub result: KMeansResult,
    /// Inertia after every assignment/update step, in order.
    pub history: Vec<f64>,
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn inertia_of(rows: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    rows.iter().zip(labels).map(|(r, &l)| sq_dist(r, &centroids[l])).sum()
}

fn recompute_centroids(rows: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Option<Vec<f64>>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(r) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

/// Gives every empty cluster the point farthest from its own centroid,
/// taken from a cluster that keeps at least one member.
fn repair_empty(rows: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>], slots: Vec<Option<Vec<f64>>>) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for (c, slot) in slots.into_iter().enumerate() {
        if let Some(centroid) = slot {
            centroids[c] = centroid;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, r) in rows.iter().enumerate() {
            let l = labels[i];
            if counts[l] < 2 {
                continue;
            }
            let d = sq_dist(r, &centroids[l]);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        if let Some((i, _)) = far {
            let old = labels[i];
            counts[old] -= 1;
            counts[c] += 1;
            labels[i] = c;
            centroids[c] = rows[i].clone();
        }
    }
    // Donor clusters lost a member; refresh their means.
    for (c, slot) in recompute_centroids(rows, labels, k, centroids[0].len()).into_iter().enumerate() {
        if let Some(centroid) = slot {
            centroids[c] = centroid;
        }
    }
}

/// Lloyd iterations from the given centroids until the assignment stops
/// changing or `max_iter` steps have run.
pub fn lloyd(rows: &[Vec<f64>], initial: Vec<Vec<f64>>, max_iter: usize) -> LloydRun {
    let k = initial.len();
    let dim = rows.first().map_or(0, Vec::len);
    let mut centroids = initial;
    let mut labels: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids).0).collect();
    let slots = recompute_centroids(rows, &labels, k, dim);
    repair_empty(rows, &mut labels, &mut centroids, slots);
    let mut history = vec![inertia_of(rows, &labels, &centroids)];

    let mut iterations = 1;
    while iterations < max_iter {
        let next: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
        let slots = recompute_centroids(rows, &labels, k, dim);
        repair_empty(rows, &mut labels, &mut centroids, slots);
        history.push(inertia_of(rows, &labels, &centroids));
        iterations += 1;
    }
    let inertia = *history.last().unwrap_or(&0.0);
    LloydRun { result: KMeansResult { labels, centroids, inertia, iterations }, history }
}

/// k-means++ seeding: first centre uniform, the rest proportional to the
/// squared distance to the nearest chosen centre.
pub fn kmeans_plus_plus<R: Rng>(rows: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(rows[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            if d2[chosen] == 0.0 {
                // Rounding walked past the last positive weight.
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = rows[pick].clone();
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn distinct_rows(rows: &[Vec<f64>]) -> usize {
    let mut sorted: Vec<&Vec<f64>> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    1 + sorted.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Best-of-`restarts` seeded k-means on the rows of `x`.
pub fn kmeans(x: &Matrix, k: usize, seed: u64, diag: &mut Diagnostics) -> Result<KMeansResult> {
    kmeans_with(&x.row_vecs(), k, seed, KMeansConfig::default(), diag)
}

pub fn kmeans_with(
    rows: &[Vec<f64>],
    k: usize,
    seed: u64,
    config: KMeansConfig,
    diag: &mut Diagnostics,
) -> Result<KMeansResult> {
    let n = rows.len();
    if k < 1 || k > n {
        return Err(Error::invalid(format!("k-means needs 1 <= k <= rows, got k={k}, rows={n}")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("k-means input has non-finite entries"));
    }
    let distinct = distinct_rows(rows);
    if k > distinct {
        diag.push(
            codes::KMEANS_DUPLICATES,
            format!("k={k} exceeds the {distinct} distinct rows; centroids will coincide"),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..config.restarts.max(1) {
        let init = kmeans_plus_plus(rows, k, &mut rng);
        let run = lloyd(rows, init, config.max_iter).result;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Davies–Bouldin index of a labelled point set, with dispersion measured as
/// the mean Euclidean distance to the centroid.
///
/// Returns `None` when two centroids coincide (index undefined) or fewer
/// than two clusters are present.
pub fn davies_bouldin(rows: &[Vec<f64>], labels: &[usize], k: usize) -> Option<f64> {
    if k < 2 {
        return None;
    }
    let dim = rows.first().map_or(0, Vec::len);
    let centroids: Vec<Vec<f64>> = recompute_centroids(rows, labels, k, dim).into_iter().collect::<Option<_>>()?;
    let mut spread = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in rows.iter().zip(labels) {
        spread[l] += sq_dist(r, &centroids[l]).sqrt();
        counts[l] += 1;
    }
    for (s, n) in spread.iter_mut().zip(&counts) {
        *s /= *n as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = sq_dist(&centroids[i], &centroids[j]).sqrt();
            if d == 0.0 {
                return None;
            }
            worst = worst.max((spread[i] + spread[j]) / d);
        }
        total += worst;
    }
    Some(total / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCurveEntry {
    pub k: usize,
    pub dbi: f64,
    pub lambda_sum: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionCurve {
    pub entries: Vec<KCurveEntry>,
    pub chosen_k: usize,
}

impl KSelectionCurve {
    pub fn entry(&self, k: usize) -> Option<&KCurveEntry> {
        self.entries.iter().find(|e| e.k == k)
    }
}

/// Seed used for the k-means run at a given k; shared by the curve and the
/// final clustering so both see the same partition.
pub fn seed_for_k(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// `R_k = DBI_k(X*) + sum_{i<=k} lambda_i` for every k in `k_min..=k_max`;
/// the chosen k minimises it (smallest k on ties).
pub fn r_k_curve(
    x_star: &Matrix,
    eigenvalues: &[f64],
    k_min: usize,
    k_max: usize,
    seed: u64,
    diag: &mut Diagnostics,
) -> Result<KSelectionCurve> {
    let m = x_star.rows();
    let k_min = k_min.max(2);
    if k_max > m || k_max > eigenvalues.len() {
        return Err(Error::invalid(format!(
            "k_max={k_max} exceeds rows ({m}) or eigenvalue count ({})",
            eigenvalues.len()
        )));
    }
    if k_min > k_max {
        return Err(Error::invalid(format!("empty k range {k_min}..={k_max}")));
    }
    let rows = x_star.row_vecs();
    let runs: Vec<Result<(KCurveEntry, bool)>> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let km = kmeans_with(&rows, k, seed_for_k(seed, k), KMeansConfig::default(), &mut Diagnostics::new())?;
            let (dbi, degenerate) = match davies_bouldin(&rows, &km.labels, k) {
                Some(v) => (v, false),
                None => (DBI_SENTINEL, true),
            };
            let lambda_sum: f64 = eigenvalues[..k].iter().sum();
            Ok((KCurveEntry { k, dbi, lambda_sum, r: dbi + lambda_sum }, degenerate))
        })
        .collect();

    let mut entries = Vec::with_capacity(runs.len());
    let mut degenerate_ks = Vec::new();
    for run in runs {
        let (entry, degenerate) = run?;
        if degenerate {
            degenerate_ks.push(entry.k);
        }
        entries.push(entry);
    }
    if !degenerate_ks.is_empty() {
        diag.push(
            codes::KMEANS_DEGENERATE,
            format!("DBI undefined (coinciding centroids) at k={degenerate_ks:?}; sentinel used"),
        );
    }
    let chosen_k = entries
        .iter()
        .fold(None::<&KCurveEntry>, |best, e| match best {
            Some(b) if b.r <= e.r => Some(b),
            _ => Some(e),
        })
        .map(|e| e.k)
        .unwrap_or(k_min);
    Ok(KSelectionCurve { entries, chosen_k })
}

/// Largest gap between consecutive ascending eigenvalues:
/// `argmax_{1<=k<k_max} (lambda_{k+1} - lambda_k)`, 1-based, lowest k on ties.
pub fn eigengap_k(eigenvalues: &[f64], k_max: usize) -> Result<usize> {
    if eigenvalues.len() < 3 {
        return Err(Error::invalid(format!("eigengap needs >= 3 eigenvalues, got {}", eigenvalues.len())));
    }
    let k_max = k_max.min(eigenvalues.len()).max(2);
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..k_max {
        let gap = eigenvalues[k] - eigenvalues[k - 1];
        if gap > best.1 {
            best = (k, gap);
        }
    }
    Ok(best.0)
}
