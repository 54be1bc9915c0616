//! Dense linear algebra for the small (m x m) matrices the pipeline works on:
//! a row-major matrix type, a cyclic Jacobi eigensolver and PCA.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the symmetry check on `SymMatrix` construction.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Jacobi stops once the off-diagonal Frobenius norm drops below this
/// fraction of the input's Frobenius norm.
pub const JACOBI_OFF_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, actual: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, actual: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.len());
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::DimensionMismatch { expected: rows, actual: c.len() });
            }
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_vecs(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// New matrix made of the listed columns, in the listed order.
    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, indices.len());
        for (jj, &j) in indices.iter().enumerate() {
            for i in 0..self.rows {
                out[(i, jj)] = self[(i, j)];
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, actual: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Square symmetric matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch { expected: m.rows(), actual: m.cols() });
        }
        if m.rows() == 0 {
            return Err(Error::invalid("matrix order must be at least 1"));
        }
        if !m.is_finite() {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let n = m.rows();
        for i in 0..n {
            for j in (i + 1)..n {
                let deviation = (m[(i, j)] - m[(j, i)]).abs();
                if deviation > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric { row: i, col: j, deviation });
                }
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn order(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.order()).map(|i| self.0[(i, i)]).sum()
    }
}

/// Eigenvalues in ascending order with matching unit eigenvectors stored as
/// the columns of `eigenvectors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }

    /// Q diag(lambda) Q^T.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvectors.rows();
        let k = self.eigenvalues.len();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for l in 0..k {
                    s += self.eigenvectors[(i, l)] * self.eigenvalues[l] * self.eigenvectors[(j, l)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues come back ascending (stable with respect to the diagonal
/// order on exact ties). Each eigenvector is flipped so that its
/// largest-magnitude entry is positive, which makes the output reproducible.
pub fn sym_eigen(m: &SymMatrix) -> Result<SpectralDecomposition> {
    let n = m.order();
    let mut a = m.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let threshold = JACOBI_OFF_TOL * a.frobenius_norm().max(f64::MIN_POSITIVE);

    let mut converged = n == 1;
    let mut sweeps = 0;
    while !converged {
        if off_diagonal_norm(&a) <= threshold {
            converged = true;
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            break;
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps, residual: off_diagonal_norm(&a) });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = v.select_columns(&order);
    orient_columns(&mut eigenvectors);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// Flips each column so its largest-magnitude entry (first on ties) is positive.
pub fn orient_columns(m: &mut Matrix) {
    for j in 0..m.cols() {
        let mut pivot = 0;
        for i in 1..m.rows() {
            if m[(i, j)].abs() > m[(pivot, j)].abs() {
                pivot = i;
            }
        }
        if m[(pivot, j)] < 0.0 {
            for i in 0..m.rows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// One Jacobi rotation annihilating a[p][q]; accumulates into v.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    // theta == 0 gives signum 1, t = 1 as required.
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub component_count: usize,
    /// Descending, summing to one.
    pub explained_variance_ratios: Vec<f64>,
    /// Principal directions as columns (k x component_count).
    pub loadings: Matrix,
    /// Set when the input had zero total variance.
    pub degenerate: bool,
}

/// PCA of the rows of `x` (m observations of k variables).
pub fn pca(x: &Matrix) -> Result<PcaResult> {
    let (m, k) = (x.rows(), x.cols());
    if m < 2 {
        return Err(Error::invalid(format!("pca needs at least 2 rows, got {m}")));
    }
    if k < 1 {
        return Err(Error::invalid("pca needs at least 1 column"));
    }
    if !x.is_finite() {
        return Err(Error::invalid("pca input has non-finite entries"));
    }

    let means: Vec<f64> = (0..k).map(|j| (0..m).map(|i| x[(i, j)]).sum::<f64>() / m as f64).collect();
    let mut cov = Matrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let s: f64 = (0..m).map(|i| (x[(i, a)] - means[a]) * (x[(i, b)] - means[b])).sum();
            let s = s / (m - 1) as f64;
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }
    let total: f64 = (0..k).map(|j| cov[(j, j)]).sum();
    if total <= 0.0 {
        let mut loadings = Matrix::zeros(k, 1);
        loadings[(0, 0)] = 1.0;
        return Ok(PcaResult {
            component_count: 1,
            explained_variance_ratios: vec![1.0],
            loadings,
            degenerate: true,
        });
    }

    let decomp = sym_eigen(&SymMatrix::new(cov)?)?;
    let order: Vec<usize> = (0..k).rev().collect();
    let variances: Vec<f64> = order.iter().map(|&i| decomp.eigenvalues[i].max(0.0)).collect();
    let sum: f64 = variances.iter().sum();
    let explained_variance_ratios = variances.iter().map(|v| v / sum).collect();
    Ok(PcaResult {
        component_count: k,
        explained_variance_ratios,
        loadings: decomp.eigenvectors.select_columns(&order),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix::new(m).unwrap()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let d = sym_eigen(&SymMatrix::new(Matrix::identity(3)).unwrap()).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0, 1.0, 1.0]);
        let qtq = d.eigenvectors.transpose().matmul(&d.eigenvectors).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(qtq[(i, j)], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn analytic_two_by_two() {
        let m = SymMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let d = sym_eigen(&m).unwrap();
        assert_abs_diff_eq!(d.eigenvalues[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.eigenvalues[1], 2.0, epsilon = 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let e0 = d.eigenvector(0);
        let e1 = d.eigenvector(1);
        assert_abs_diff_eq!(e0[0], h, epsilon = 1e-12);
        assert_abs_diff_eq!(e0[1], h, epsilon = 1e-12);
        assert_abs_diff_eq!(e1[0].abs(), h, epsilon = 1e-12);
        assert_abs_diff_eq!(e1[0], -e1[1], epsilon = 1e-12);
    }

    #[test]
    fn random_twenty_reconstructs() {
        let m = random_symmetric(20, 7);
        let d = sym_eigen(&m).unwrap();
        let mut diff = d.reconstruct();
        for i in 0..20 {
            for j in 0..20 {
                diff[(i, j)] -= m.as_matrix()[(i, j)];
            }
        }
        assert!(diff.frobenius_norm() / m.as_matrix().frobenius_norm() < 1e-8);
        assert!(d.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn residuals_and_trace() {
        for seed in 0..10 {
            let n = 2 + seed as usize * 3;
            let m = random_symmetric(n, seed);
            let d = sym_eigen(&m).unwrap();
            let a = m.as_matrix();
            let bound = 1e-8 * a.inf_norm();
            for l in 0..n {
                let q = d.eigenvector(l);
                for i in 0..n {
                    let mq: f64 = (0..n).map(|j| a[(i, j)] * q[j]).sum();
                    assert!((mq - d.eigenvalues[l] * q[i]).abs() <= bound);
                }
            }
            let sum: f64 = d.eigenvalues.iter().sum();
            assert!((sum - m.trace()).abs() <= 1e-8 * m.trace().abs().max(1.0));
        }
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let m = random_symmetric(8, 99);
        let d = sym_eigen(&m).unwrap();
        for j in 0..8 {
            let col = d.eigenvector(j);
            let max = col.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn deterministic() {
        let m = random_symmetric(15, 3);
        assert_eq!(sym_eigen(&m).unwrap(), sym_eigen(&m).unwrap());
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]]).unwrap();
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric { .. })));
        let m = Matrix::from_rows(&[vec![1.0, f64::NAN], vec![f64::NAN, 1.0]]).unwrap();
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn one_by_one() {
        let d = sym_eigen(&SymMatrix::from_rows(&[vec![-3.5]]).unwrap()).unwrap();
        assert_eq!(d.eigenvalues, vec![-3.5]);
        assert_eq!(d.eigenvectors[(0, 0)], 1.0);
    }

    #[test]
    fn pca_single_column() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![4.0]]).unwrap();
        let p = pca(&x).unwrap();
        assert_eq!(p.component_count, 1);
        assert_abs_diff_eq!(p.explained_variance_ratios[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pca_uncorrelated_three_to_one() {
        // Column a takes +-sqrt(3)*s, column b +-s in a balanced, uncorrelated
        // arrangement: sample variances are 3 : 1.
        let s3 = 3f64.sqrt();
        let rows = vec![
            vec![s3, 1.0],
            vec![s3, -1.0],
            vec![-s3, 1.0],
            vec![-s3, -1.0],
        ];
        let p = pca(&Matrix::from_rows(&rows).unwrap()).unwrap();
        assert_abs_diff_eq!(p.explained_variance_ratios[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(p.explained_variance_ratios[1], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn pca_identical_columns_is_rank_one() {
        let rows: Vec<Vec<f64>> = [0.3, -1.2, 2.0, 0.7].iter().map(|&v| vec![v, v]).collect();
        let p = pca(&Matrix::from_rows(&rows).unwrap()).unwrap();
        assert_abs_diff_eq!(p.explained_variance_ratios[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn pca_zero_variance_flags_degenerate() {
        let rows = vec![vec![1.0, 2.0]; 5];
        let p = pca(&Matrix::from_rows(&rows).unwrap()).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.explained_variance_ratios, vec![1.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn pca_ratios_sum_to_one(
                data in proptest::collection::vec(-10.0f64..10.0, 12..60),
                cols in 1usize..4,
            ) {
                let rows = data.len() / cols;
                prop_assume!(rows >= 2);
                let x = Matrix::from_vec(rows, cols, data[..rows * cols].to_vec()).unwrap();
                let p = pca(&x).unwrap();
                let sum: f64 = p.explained_variance_ratios.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
                prop_assert!(p.explained_variance_ratios.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(p.explained_variance_ratios.iter().all(|&r| r >= 0.0));
            }

            #[test]
            fn eigenvectors_orthonormal(seed in 0u64..1000, n in 1usize..12) {
                let d = sym_eigen(&random_symmetric(n, seed)).unwrap();
                let qtq = d.eigenvectors.transpose().matmul(&d.eigenvectors).unwrap();
                for i in 0..n {
                    prop_assert!((qtq[(i, i)] - 1.0).abs() <= 1e-9);
                    for j in 0..i {
                        prop_assert!(qtq[(i, j)].abs() <= 1e-8);
                    }
                }
            }
        }
    }
}
