//! Eigenvector relevance scoring and selection.
//!
//! Every eigenvector after the first is clustered in one dimension into 2, 3
//! and 4 groups; the summed Davies–Bouldin indices divided by the eigenvalue
//! give its relevance `r`. Eigenvectors whose `r` lies outside one standard
//! deviation of the mean are kept, then trimmed to the prefix explaining the
//! requested share of variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{eigengap_k, DBI_SENTINEL};
use crate::diag::{codes, Diagnostics};
use crate::error::{Error, Result};
use crate::linalg::{pca, Matrix, SpectralDecomposition};

pub const LAMBDA_FLOOR: f64 = 1e-10;
pub const DBI_FLOOR: f64 = 1e-6;
pub const DBI_CLUSTER_COUNTS: [usize; 3] = [2, 3, 4];
pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.8;
pub const PARTITION_TIE_TOL: f64 = 1e-12;

/// Optimal partition of sorted values into `c` contiguous groups minimising
/// the within-group sum of squares. Returns group start offsets.
///
/// Costs within a relative [`PARTITION_TIE_TOL`] count as ties, resolved
/// toward the earliest split point, deciding from the last group backwards.
/// This keeps exact ties independent of rounding order.
pub fn optimal_partition_1d(sorted: &[f64], c: usize) -> Vec<usize> {
    let n = sorted.len();
    debug_assert!(c >= 1 && c <= n);
    let shift = sorted[n / 2];
    let mut sum = vec![0.0; n + 1];
    let mut sum_sq = vec![0.0; n + 1];
    for (i, &v) in sorted.iter().enumerate() {
        let v = v - shift;
        sum[i + 1] = sum[i] + v;
        sum_sq[i + 1] = sum_sq[i] + v * v;
    }
    // SSE of sorted[j..i]
    let cost = |j: usize, i: usize| {
        let len = (i - j) as f64;
        let s = sum[i] - sum[j];
        (sum_sq[i] - sum_sq[j] - s * s / len).max(0.0)
    };

    // best[g][i]: minimal cost of splitting sorted[..i] into g groups.
    let mut best = vec![vec![f64::INFINITY; n + 1]; c + 1];
    let mut split = vec![vec![0usize; n + 1]; c + 1];
    best[0][0] = 0.0;
    for g in 1..=c {
        for i in g..=n {
            for j in (g - 1)..i {
                let v = best[g - 1][j] + cost(j, i);
                let current = best[g][i];
                if current.is_infinite() || v < current - PARTITION_TIE_TOL * current.abs() {
                    best[g][i] = v;
                    split[g][i] = j;
                }
            }
        }
    }
    let mut starts = vec![0; c];
    let mut end = n;
    for g in (1..=c).rev() {
        let j = split[g][end];
        starts[g - 1] = j;
        end = j;
    }
    starts
}

/// Davies–Bouldin index of a 1-D partition given as contiguous groups of
/// sorted values, with dispersion = mean absolute deviation from the
/// centroid. `None` when two centroids coincide.
pub fn dbi_of_groups(groups: &[&[f64]]) -> Option<f64> {
    let c = groups.len();
    let centroids: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let spread: Vec<f64> = groups
        .iter()
        .zip(&centroids)
        .map(|(g, ce)| g.iter().map(|v| (v - ce).abs()).sum::<f64>() / g.len() as f64)
        .collect();
    let mut total = 0.0;
    for i in 0..c {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..c {
            if i == j {
                continue;
            }
            let d = (centroids[i] - centroids[j]).abs();
            if d == 0.0 {
                return None;
            }
            worst = worst.max((spread[i] + spread[j]) / d);
        }
        total += worst;
    }
    Some(total / c as f64)
}

/// Davies–Bouldin index of `values` clustered into `c` groups by exact
/// 1-D k-means.
pub fn dbi_1d(values: &[f64], c: usize, diag: &mut Diagnostics) -> Result<f64> {
    if c < 2 || values.len() < c {
        return Err(Error::invalid(format!("dbi_1d needs 2 <= c <= len, got c={c}, len={}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("dbi_1d input has non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        diag.push(codes::DBI_DEGENERATE, format!("constant vector; DBI_{c} set to sentinel"));
        return Ok(DBI_SENTINEL);
    }
    let starts = optimal_partition_1d(&sorted, c);
    let groups: Vec<&[f64]> = (0..c)
        .map(|g| {
            let end = if g + 1 < c { starts[g + 1] } else { sorted.len() };
            &sorted[starts[g]..end]
        })
        .collect();
    match dbi_of_groups(&groups) {
        Some(v) => Ok(v),
        None => {
            diag.push(codes::DBI_DEGENERATE, format!("coincident centroids at c={c}; DBI set to sentinel"));
            Ok(DBI_SENTINEL)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenScore {
    /// Index into the ascending spectrum (0 is the first eigenvector).
    pub index: usize,
    pub lambda: f64,
    /// Floored DBI for c = 2, 3, 4.
    pub dbi: [f64; 3],
    pub dbi_sum: f64,
    pub r: f64,
}

/// Relevance of every eigenvector except the first.
pub fn relevance_scores(decomp: &SpectralDecomposition, diag: &mut Diagnostics) -> Result<Vec<EigenScore>> {
    let m = decomp.len();
    if m < 5 {
        return Err(Error::invalid(format!("relevance scoring needs at least 5 eigenpairs, got {m}")));
    }
    let scored: Vec<Result<(EigenScore, Diagnostics)>> = (1..m)
        .into_par_iter()
        .map(|index| {
            let mut local = Diagnostics::new();
            let v = decomp.eigenvector(index);
            let mut dbi = [0.0; 3];
            for (slot, &c) in dbi.iter_mut().zip(&DBI_CLUSTER_COUNTS) {
                *slot = dbi_1d(&v, c, &mut local)?.max(DBI_FLOOR);
            }
            let dbi_sum = dbi.iter().sum::<f64>();
            let lambda = decomp.eigenvalues[index];
            let r = dbi_sum / lambda.max(LAMBDA_FLOOR);
            Ok((EigenScore { index, lambda, dbi, dbi_sum, r }, local))
        })
        .collect();
    let mut out = Vec::with_capacity(m - 1);
    for s in scored {
        let (score, local) = s?;
        diag.extend(local);
        out.push(score);
    }
    Ok(out)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Freedman–Diaconis histogram bin width `2 IQR n^{-1/3}`; falls back to
/// `range / sqrt(n)` when the IQR is zero.
pub fn fd_bin_width(values: &[f64], diag: &mut Diagnostics) -> Result<f64> {
    if values.len() < 4 {
        return Err(Error::invalid(format!("bin width needs at least 4 values, got {}", values.len())));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    if iqr > 0.0 {
        return Ok(2.0 * iqr * n.powf(-1.0 / 3.0));
    }
    diag.push(codes::FD_ZERO_IQR, "zero inter-quartile range; bin width from range / sqrt(n)");
    Ok((sorted[sorted.len() - 1] - sorted[0]) / n.sqrt())
}

/// Whether X* keeps original eigenvector columns or PCA-rotated components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    #[default]
    EigenvectorPrefix,
    PrincipalComponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub x_star: Matrix,
    pub kept: usize,
    pub variance_ratios: Vec<f64>,
}

/// Keeps the smallest number `p` of leading columns whose principal
/// components explain at least `threshold` of the variance of `x`.
pub fn refine_variance(x: &Matrix, threshold: f64, mode: RefineMode, diag: &mut Diagnostics) -> Result<Refinement> {
    if x.cols() < 1 {
        return Err(Error::invalid("refinement needs at least one column"));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!("variance threshold must be in (0, 1], got {threshold}")));
    }
    let p = pca(x)?;
    if p.degenerate {
        diag.push(codes::ZERO_VARIANCE, "selected eigenvectors have zero variance; keeping first column");
        return Ok(Refinement { x_star: x.select_columns(&[0]), kept: 1, variance_ratios: p.explained_variance_ratios });
    }
    let mut cumulative = 0.0;
    let mut kept = p.explained_variance_ratios.len();
    for (i, r) in p.explained_variance_ratios.iter().enumerate() {
        cumulative += r;
        if cumulative >= threshold - 1e-12 {
            kept = i + 1;
            break;
        }
    }
    let x_star = match mode {
        RefineMode::EigenvectorPrefix => x.select_columns(&(0..kept).collect::<Vec<_>>()),
        RefineMode::PrincipalComponents => {
            let m = x.rows();
            let mut centered = x.clone();
            for j in 0..x.cols() {
                let mean = (0..m).map(|i| x[(i, j)]).sum::<f64>() / m as f64;
                for i in 0..m {
                    centered[(i, j)] -= mean;
                }
            }
            let basis = p.loadings.select_columns(&(0..kept).collect::<Vec<_>>());
            centered.matmul(&basis)?
        }
    };
    Ok(Refinement { x_star, kept, variance_ratios: p.explained_variance_ratios })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub scores: Vec<EigenScore>,
    pub mu: f64,
    pub sigma: f64,
    pub fd_bin_width: f64,
    /// Chosen eigenvector indices, ascending (ascending eigenvalue).
    pub chosen: Vec<usize>,
    pub used_fallback: bool,
    /// Chosen eigenvectors as columns.
    pub x: Matrix,
    pub x_star: Matrix,
    pub kept: usize,
    pub variance_ratios: Vec<f64>,
}

impl SelectionResult {
    pub fn is_chosen(&self, index: usize) -> bool {
        self.chosen.contains(&index)
    }
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mu, 0.0);
    }
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0);
    (mu, var.sqrt())
}

/// Keeps eigenvectors whose relevance falls outside `[mu - sigma, mu + sigma]`.
///
/// When none qualify, falls back to e_2..e_k with k from the eigengap
/// (at least e_2). `x_star` starts equal to `x`; see [`SelectionResult::refine`].
pub fn select_eigenvectors(
    scores: &[EigenScore],
    decomp: &SpectralDecomposition,
    k_max: usize,
    diag: &mut Diagnostics,
) -> Result<SelectionResult> {
    if scores.is_empty() {
        return Err(Error::invalid("no eigenvector scores to select from"));
    }
    let r: Vec<f64> = scores.iter().map(|s| s.r).collect();
    let (mu, sigma) = mean_and_sample_std(&r);
    let fd = if r.len() >= 4 { fd_bin_width(&r, diag)? } else { 0.0 };

    let mut chosen: Vec<usize> =
        scores.iter().filter(|s| s.r < mu - sigma || s.r > mu + sigma).map(|s| s.index).collect();
    chosen.sort_unstable();
    let mut used_fallback = false;
    if chosen.is_empty() {
        let k_gap = eigengap_k(&decomp.eigenvalues, k_max)?;
        chosen = (1..k_gap.max(2)).collect();
        used_fallback = true;
        diag.push(
            codes::SELECTION_FALLBACK,
            format!("no relevance outliers; using eigenvectors 2..={} from the eigengap", k_gap.max(2)),
        );
    }
    let x = decomp.eigenvectors.select_columns(&chosen);
    let kept = chosen.len();
    Ok(SelectionResult {
        scores: scores.to_vec(),
        mu,
        sigma,
        fd_bin_width: fd,
        chosen,
        used_fallback,
        x_star: x.clone(),
        x,
        kept,
        variance_ratios: Vec::new(),
    })
}

impl SelectionResult {
    /// Applies [`refine_variance`] to `x`, filling `x_star`.
    pub fn refine(&mut self, threshold: f64, mode: RefineMode, diag: &mut Diagnostics) -> Result<()> {
        let r = refine_variance(&self.x, threshold, mode, diag)?;
        self.x_star = r.x_star;
        self.kept = r.kept;
        self.variance_ratios = r.variance_ratios;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dbi_perfectly_separated() {
        let mut diag = Diagnostics::new();
        assert_eq!(dbi_1d(&[0.0, 0.0, 1.0, 1.0], 2, &mut diag).unwrap(), 0.0);
        assert!(diag.is_empty());
    }

    #[test]
    fn dbi_hand_value() {
        let v = dbi_1d(&[0.0, 0.1, 1.0, 1.1], 2, &mut Diagnostics::new()).unwrap();
        assert_abs_diff_eq!(v, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn dbi_constant_vector_sentinel() {
        let mut diag = Diagnostics::new();
        assert_eq!(dbi_1d(&[0.3; 6], 2, &mut diag).unwrap(), DBI_SENTINEL);
        assert!(diag.has(codes::DBI_DEGENERATE));
    }

    #[test]
    fn dbi_reflection_invariant() {
        let v = [0.3, -1.2, 0.9, 2.2, 0.1, -0.7, 1.4];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        for c in 2..=4 {
            let a = dbi_1d(&v, c, &mut Diagnostics::new()).unwrap();
            let b = dbi_1d(&neg, c, &mut Diagnostics::new()).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn partition_finds_obvious_groups() {
        let v = [1.0, 1.1, 1.2, 5.0, 5.1, 9.0, 9.2];
        assert_eq!(optimal_partition_1d(&v, 3), vec![0, 3, 5]);
    }

    #[test]
    fn fd_hand_quartiles() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        let w = fd_bin_width(&v, &mut Diagnostics::new()).unwrap();
        assert_abs_diff_eq!(w, 3.5, epsilon = 1e-12);
        let scaled: Vec<f64> = v.iter().map(|x| x * 2.5).collect();
        assert_abs_diff_eq!(fd_bin_width(&scaled, &mut Diagnostics::new()).unwrap(), 3.5 * 2.5, epsilon = 1e-12);
    }

    #[test]
    fn fd_zero_iqr_fallback() {
        let mut diag = Diagnostics::new();
        assert_eq!(fd_bin_width(&[2.0; 6], &mut diag).unwrap(), 0.0);
        assert!(diag.has(codes::FD_ZERO_IQR));
    }

    #[test]
    fn relevance_formula() {
        let s = EigenScore { index: 1, lambda: 0.0, dbi: [0.1; 3], dbi_sum: 0.3, r: 0.0 };
        assert_abs_diff_eq!(s.dbi_sum / s.lambda.max(LAMBDA_FLOOR), 3e9, epsilon = 1e-3);
    }

    fn decomp_with(eigenvalues: Vec<f64>, columns: Vec<Vec<f64>>) -> SpectralDecomposition {
        let cols: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
        SpectralDecomposition { eigenvalues, eigenvectors: Matrix::from_columns(&cols).unwrap() }
    }

    #[test]
    fn smaller_lambda_wins_with_equal_dbi() {
        let v = vec![0.5, 0.4, -0.1, -0.3, -0.5, 0.2];
        let cols = vec![vec![0.4; 6], v.clone(), v.clone(), v.clone(), v.clone(), v];
        let d = decomp_with(vec![0.0, 0.1, 0.3, 0.5, 0.7, 0.9], cols);
        let s = relevance_scores(&d, &mut Diagnostics::new()).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].dbi_sum, s[1].dbi_sum);
        assert!(s.windows(2).all(|w| w[0].r > w[1].r));
    }

    fn scores_with(r: &[f64]) -> Vec<EigenScore> {
        r.iter()
            .enumerate()
            .map(|(i, &r)| EigenScore { index: i + 1, lambda: 0.1 * (i + 1) as f64, dbi: [0.0; 3], dbi_sum: 0.0, r })
            .collect()
    }

    fn dummy_decomp(m: usize) -> SpectralDecomposition {
        let cols: Vec<Vec<f64>> = (0..m).map(|j| (0..m).map(|i| ((i * (j + 1)) as f64).sin()).collect()).collect();
        let eig = (0..m).map(|i| i as f64 * 0.1).collect();
        decomp_with(eig, cols)
    }

    #[test]
    fn select_single_outlier() {
        let mut diag = Diagnostics::new();
        let s = select_eigenvectors(&scores_with(&[10.0, 10.0, 10.0, 10.0, 100.0]), &dummy_decomp(6), 6, &mut diag)
            .unwrap();
        assert_abs_diff_eq!(s.mu, 28.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sigma, 1620f64.sqrt(), epsilon = 1e-12);
        assert_eq!(s.chosen, vec![5]);
        assert_eq!(s.x.cols(), 1);
    }

    #[test]
    fn select_equal_scores_falls_back_to_eigengap() {
        let mut diag = Diagnostics::new();
        let mut d = dummy_decomp(6);
        d.eigenvalues = vec![0.0, 0.01, 0.02, 0.6, 0.7, 0.8];
        let s = select_eigenvectors(&scores_with(&[5.0; 5]), &d, 6, &mut diag).unwrap();
        assert!(s.used_fallback);
        assert!(diag.has(codes::SELECTION_FALLBACK));
        assert_eq!(s.chosen, vec![1, 2]);
    }

    fn orthogonal_columns(variances: &[f64]) -> Matrix {
        // Walsh functions on 8 rows: zero-mean and mutually orthogonal.
        const MASKS: [usize; 7] = [1, 2, 4, 3, 5, 6, 7];
        let m = 8;
        let mut x = Matrix::zeros(m, variances.len());
        for (j, v) in variances.iter().enumerate() {
            // A column of +-s has sample variance s^2 * m / (m - 1).
            let s = (v * (m - 1) as f64 / m as f64).sqrt();
            for i in 0..m {
                x[(i, j)] = if (i & MASKS[j]).count_ones().is_multiple_of(2) { s } else { -s };
            }
        }
        x
    }

    #[test]
    fn refine_cumulative_sum() {
        let x = orthogonal_columns(&[6.0, 3.0, 1.0]);
        let r = refine_variance(&x, 0.8, RefineMode::EigenvectorPrefix, &mut Diagnostics::new()).unwrap();
        for (got, want) in r.variance_ratios.iter().zip([0.6, 0.3, 0.1]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(r.kept, 2);
        assert_eq!(r.x_star, x.select_columns(&[0, 1]));
    }

    #[test]
    fn refine_single_column() {
        let x = Matrix::from_rows(&[vec![1.0], vec![-2.0], vec![0.5]]).unwrap();
        let r = refine_variance(&x, 0.8, RefineMode::EigenvectorPrefix, &mut Diagnostics::new()).unwrap();
        assert_eq!(r.kept, 1);
        assert_eq!(r.x_star, x);
    }

    #[test]
    fn refine_drops_the_fourth_of_four() {
        // Four qualified eigenvectors whose first three components carry 85%.
        let x = orthogonal_columns(&[5.0, 2.0, 1.5, 1.5]);
        let r = refine_variance(&x, 0.8, RefineMode::EigenvectorPrefix, &mut Diagnostics::new()).unwrap();
        assert_eq!(r.kept, 3);
        assert_eq!(r.x_star.cols(), 3);
    }

    #[test]
    fn refine_zero_variance() {
        let x = Matrix::from_rows(&vec![vec![1.0, 1.0]; 4]).unwrap();
        let mut diag = Diagnostics::new();
        let r = refine_variance(&x, 0.8, RefineMode::EigenvectorPrefix, &mut diag).unwrap();
        assert_eq!(r.kept, 1);
        assert!(diag.has(codes::ZERO_VARIANCE));
    }

    #[test]
    fn refine_principal_components_mode() {
        let x = orthogonal_columns(&[6.0, 3.0, 1.0]);
        let r = refine_variance(&x, 0.8, RefineMode::PrincipalComponents, &mut Diagnostics::new()).unwrap();
        assert_eq!(r.x_star.cols(), 2);
        assert_eq!(r.x_star.rows(), 8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dbi_sign_flip_invariant(
                v in proptest::collection::vec(-1.0f64..1.0, 6..30),
                c in 2usize..5,
            ) {
                let neg: Vec<f64> = v.iter().map(|x| -x).collect();
                let a = dbi_1d(&v, c, &mut Diagnostics::new()).unwrap();
                let b = dbi_1d(&neg, c, &mut Diagnostics::new()).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }

            #[test]
            fn refine_prefix_is_minimal(
                data in proptest::collection::vec(-1.0f64..1.0, 40..80),
                cols in 1usize..5,
                threshold in 0.3f64..1.0,
            ) {
                let rows = data.len() / cols;
                let x = Matrix::from_vec(rows, cols, data[..rows * cols].to_vec()).unwrap();
                let r = refine_variance(&x, threshold, RefineMode::EigenvectorPrefix, &mut Diagnostics::new()).unwrap();
                prop_assert!(r.kept >= 1 && r.kept <= cols);
                prop_assert_eq!(&r.x_star, &x.select_columns(&(0..r.kept).collect::<Vec<_>>()));
                let before: f64 = r.variance_ratios[..r.kept - 1].iter().sum();
                prop_assert!(before < threshold - 1e-12);
            }
        }
    }
}
