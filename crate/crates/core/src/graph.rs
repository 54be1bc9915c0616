//! Locally scaled affinity over the GNG edge set and the normalized
//! symmetric Laplacian built from it.

use serde::{Deserialize, Serialize};

use crate::cluster::sq_dist;
use crate::diag::{codes, Diagnostics};
use crate::error::{Error, Result};
use crate::gng::GngModel;
use crate::linalg::{orient_columns, sym_eigen, Matrix, SpectralDecomposition, SymMatrix};

pub const SIGMA_FLOOR: f64 = 1e-12;
/// Eigenvalues this far outside [0, 2] are treated as round-off.
pub const SPECTRUM_CLAMP_TOL: f64 = 1e-10;
/// Eigenvalues at or below this form the null space of a disconnected graph.
pub const NULL_SPACE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalScales {
    pub sigma: Vec<f64>,
}

/// Dense symmetric affinity, non-zero only on GNG edges.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix(Matrix);

impl AffinityMatrix {
    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.rows()
    }

    pub fn nonzeros(&self) -> usize {
        self.0.as_slice().iter().filter(|&&v| v != 0.0).count()
    }

    /// Validates a hand-built affinity matrix.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        let sym = SymMatrix::new(m)?;
        let m = sym.into_matrix();
        for i in 0..m.rows() {
            if m[(i, i)] != 0.0 {
                return Err(Error::invalid("affinity diagonal must be zero"));
            }
            if m.row(i).iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::invalid("affinity entries must lie in [0, 1]"));
            }
        }
        Ok(Self(m))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianSym {
    pub matrix: SymMatrix,
    pub degrees: Vec<f64>,
}

/// `sigma_i` = distance from neuron i to its K-th nearest graph neighbour.
///
/// A neuron with fewer than K neighbours falls back to its K-th nearest
/// neuron overall; zero scales are floored at [`SIGMA_FLOOR`].
pub fn local_scales(model: &GngModel, k: usize, diag: &mut Diagnostics) -> Result<LocalScales> {
    if k == 0 {
        return Err(Error::invalid("local-scale neighbour rank K must be positive"));
    }
    let m = model.len();
    if m <= k {
        return Err(Error::invalid(format!("K={k} needs more than {k} neurons, model has {m}")));
    }
    let mut sigma = Vec::with_capacity(m);
    let mut fallbacks = Vec::new();
    let mut floored = Vec::new();
    for i in 0..m {
        let here = &model.neurons[i].position;
        let dist = |j: usize| sq_dist(here, &model.neurons[j].position).sqrt();
        let mut d: Vec<f64> = model.neighbors(i).into_iter().map(dist).collect();
        if d.len() < k {
            fallbacks.push(i);
            d = (0..m).filter(|&j| j != i).map(dist).collect();
        }
        d.sort_by(f64::total_cmp);
        let mut s = d[k - 1];
        if s < SIGMA_FLOOR {
            floored.push(i);
            s = SIGMA_FLOOR;
        }
        sigma.push(s);
    }
    if !fallbacks.is_empty() {
        diag.push(
            codes::SCALE_FALLBACK,
            format!("neurons {fallbacks:?} have fewer than {k} graph neighbours; used global nearest"),
        );
    }
    if !floored.is_empty() {
        diag.push(codes::SCALE_FLOOR, format!("neurons {floored:?} had zero local scale"));
    }
    Ok(LocalScales { sigma })
}

/// `A_ij = exp(-d^2(w_i, w_j) / (sigma_i sigma_j))` on GNG edges, zero elsewhere.
pub fn affinity(model: &GngModel, scales: &LocalScales) -> Result<AffinityMatrix> {
    let m = model.len();
    if scales.sigma.len() != m {
        return Err(Error::DimensionMismatch { expected: m, actual: scales.sigma.len() });
    }
    if scales.sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("local scales must be positive and finite"));
    }
    let mut a = Matrix::zeros(m, m);
    for e in &model.edges {
        let d2 = sq_dist(&model.neurons[e.a].position, &model.neurons[e.b].position);
        let v = (-d2 / (scales.sigma[e.a] * scales.sigma[e.b])).exp();
        a[(e.a, e.b)] = v;
        a[(e.b, e.a)] = v;
    }
    Ok(AffinityMatrix(a))
}

/// `L = I - D^{-1/2} A D^{-1/2}`. Zero-degree nodes get an identity row.
pub fn normalized_laplacian(a: &AffinityMatrix, diag: &mut Diagnostics) -> Result<LaplacianSym> {
    let m = a.order();
    let am = a.as_matrix();
    let degrees: Vec<f64> = (0..m).map(|j| (0..m).map(|i| am[(i, j)]).sum()).collect();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let isolated: Vec<usize> = (0..m).filter(|&i| degrees[i] <= 0.0).collect();
    if !isolated.is_empty() {
        diag.push(codes::ISOLATED_NODE, format!("nodes {isolated:?} have zero degree; identity rows used"));
    }
    let mut l = Matrix::identity(m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                l[(i, j)] = -inv_sqrt[i] * am[(i, j)] * inv_sqrt[j];
            }
        }
    }
    // Exact symmetry: both triangles come from the same products.
    for i in 0..m {
        for j in (i + 1)..m {
            l[(j, i)] = l[(i, j)];
        }
    }
    Ok(LaplacianSym { matrix: SymMatrix::new(l)?, degrees })
}

/// Full spectrum of the Laplacian with eigenvalues clamped to [0, 2].
pub fn spectrum(l: &LaplacianSym) -> Result<SpectralDecomposition> {
    let mut d = sym_eigen(&l.matrix)?;
    for v in &mut d.eigenvalues {
        if *v < -SPECTRUM_CLAMP_TOL || *v > 2.0 + SPECTRUM_CLAMP_TOL {
            log::warn!("Laplacian eigenvalue {v} outside [0, 2] beyond round-off");
        }
        *v = v.clamp(0.0, 2.0);
    }
    canonicalize_null_space(&mut d, &l.degrees);
    Ok(d)
}

/// Fixes the basis of a multi-dimensional null space.
///
/// Any orthonormal basis of a repeated zero eigenvalue is valid, so the
/// solver's choice is arbitrary. The first vector is set to the trivial
/// eigenvector `D^{1/2} 1` (normalized) and the rest span its orthogonal
/// complement within the null space, ordered by Gram-Schmidt over the
/// original vectors. This keeps `e_1` the connectivity vector that scoring
/// skips, so the remaining null vectors carry only component structure.
fn canonicalize_null_space(d: &mut SpectralDecomposition, degrees: &[f64]) {
    let z = d.eigenvalues.iter().take_while(|&&v| v <= NULL_SPACE_TOL).count();
    if z < 2 {
        return;
    }
    let m = d.eigenvectors.rows();
    let t: Vec<f64> = degrees.iter().map(|&x| x.max(0.0).sqrt()).collect();
    let coeff: Vec<f64> = (0..z).map(|j| (0..m).map(|i| t[i] * d.eigenvectors[(i, j)]).sum()).collect();
    let norm = coeff.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return;
    }
    // Orthonormal basis of R^z whose first vector is coeff/|coeff|.
    let mut basis: Vec<Vec<f64>> = vec![coeff.iter().map(|c| c / norm).collect()];
    let mut candidates: Vec<usize> = (0..z).collect();
    while basis.len() < z {
        let (pos, residual) = candidates
            .iter()
            .enumerate()
            .map(|(pos, &k)| {
                let mut r = vec![0.0; z];
                r[k] = 1.0;
                for b in &basis {
                    let dot = b[k];
                    r.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
                }
                (pos, r)
            })
            .max_by(|a, b| {
                let na: f64 = a.1.iter().map(|x| x * x).sum();
                let nb: f64 = b.1.iter().map(|x| x * x).sum();
                na.total_cmp(&nb).then(b.0.cmp(&a.0))
            })
            .expect("candidates remain while basis is incomplete");
        candidates.remove(pos);
        let rn = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(residual.into_iter().map(|x| x / rn).collect());
    }
    let mut null = Matrix::zeros(m, z);
    for (j, b) in basis.iter().enumerate() {
        for i in 0..m {
            null[(i, j)] = (0..z).map(|k| d.eigenvectors[(i, k)] * b[k]).sum();
        }
    }
    orient_columns(&mut null);
    for j in 0..z {
        for i in 0..m {
            d.eigenvectors[(i, j)] = null[(i, j)];
        }
    }
}
