//! Growing neural gas: an incremental vector quantizer whose Hebbian edges
//! form the sparse graph the spectral stage works on.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans_with, sq_dist, KMeansConfig};
use crate::diag::{codes, Diagnostics};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neuron {
    pub position: Vec<f64>,
    /// Accumulated squared distance to the signals it won.
    pub error: f64,
}

/// Undirected edge, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GngEdge {
    pub a: usize,
    pub b: usize,
    pub age: u32,
}

impl GngEdge {
    fn new(a: usize, b: usize) -> Self {
        Self { a: a.min(b), b: a.max(b), age: 0 }
    }

    fn touches(&self, i: usize) -> bool {
        self.a == i || self.b == i
    }

    fn other(&self, i: usize) -> usize {
        if self.a == i {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GngParams {
    pub m_target: usize,
    pub eps_b: f64,
    pub eps_n: f64,
    /// Insert a neuron every `insert_interval` signals.
    pub insert_interval: usize,
    pub max_age: u32,
    /// Error multiplier applied to q and f on insertion.
    pub alpha: f64,
    /// Error decay factor applied after every pass.
    pub beta: f64,
    pub stability_tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for GngParams {
    fn default() -> Self {
        Self {
            m_target: 100,
            eps_b: 0.05,
            eps_n: 0.006,
            insert_interval: 100,
            max_age: 88,
            alpha: 0.5,
            beta: 0.995,
            stability_tol: 1e-3,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl GngParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if self.m_target < 2 {
            return Err(Error::invalid("m_target must be at least 2"));
        }
        if !unit(self.eps_b) || !unit(self.eps_n) || self.eps_n >= self.eps_b {
            return Err(Error::invalid("need 0 < eps_n < eps_b < 1"));
        }
        if self.insert_interval == 0 || self.max_age == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("insert_interval, max_age and max_epochs must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !unit(self.beta) {
            return Err(Error::invalid("need alpha in (0,1] and beta in (0,1)"));
        }
        if self.stability_tol <= 0.0 || !self.stability_tol.is_finite() {
            return Err(Error::invalid("stability_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GngModel {
    pub neurons: Vec<Neuron>,
    pub edges: Vec<GngEdge>,
}

impl GngModel {
    /// Model with the given positions, zero errors and no edges.
    pub fn from_positions(positions: Vec<Vec<f64>>) -> Self {
        Self {
            neurons: positions.into_iter().map(|position| Neuron { position, error: 0.0 }).collect(),
            edges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.neurons.first().map_or(0, |n| n.position.len())
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        self.neurons.iter().map(|n| n.position.clone()).collect()
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let (a, b) = (a.min(b), a.max(b));
        self.edges.iter().position(|e| e.a == a && e.b == b)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge_index(a, b).is_some()
    }

    /// Adds an edge with age 0, or resets the age of an existing one.
    pub fn connect(&mut self, a: usize, b: usize) {
        assert_ne!(a, b, "self-loop");
        match self.edge_index(a, b) {
            Some(i) => self.edges[i].age = 0,
            None => self.edges.push(GngEdge::new(a, b)),
        }
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.edges.iter().filter(|e| e.touches(i)).map(|e| e.other(i)).collect();
        out.sort_unstable();
        out
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|e| e.touches(i)).count()
    }

    fn remove_neuron(&mut self, i: usize) {
        self.neurons.remove(i);
        self.edges.retain(|e| !e.touches(i));
        for e in &mut self.edges {
            if e.a > i {
                e.a -= 1;
            }
            if e.b > i {
                e.b -= 1;
            }
        }
    }

    /// Multiplies every position by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for n in &mut out.neurons {
            n.position.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }

    /// Connected components as a label per neuron (labels in order of first
    /// appearance) and the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for e in &self.edges {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut labels = vec![usize::MAX; n];
        let mut root_label = vec![usize::MAX; n];
        let mut count = 0;
        for (i, label) in labels.iter_mut().enumerate() {
            let r = find(&mut parent, i);
            if root_label[r] == usize::MAX {
                root_label[r] = count;
                count += 1;
            }
            *label = root_label[r];
        }
        (labels, count)
    }

    /// CSV dump: `neuron,<index>,<x0>,<x1>,...` rows then `edge,<a>,<b>,<age>` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,i,j_or_x0,rest\n");
        for (i, n) in self.neurons.iter().enumerate() {
            let coords: Vec<String> = n.position.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("neuron,{i},{}\n", coords.join(",")));
        }
        for e in &self.edges {
            out.push_str(&format!("edge,{},{},{}\n", e.a, e.b, e.age));
        }
        out
    }
}

fn check_dim(model: &GngModel, x: &[f64]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), actual: x.len() });
    }
    Ok(())
}

/// Nearest and second-nearest neurons to `x`; ties go to the lower index.
pub fn find_bmu(model: &GngModel, x: &[f64]) -> Result<(usize, usize)> {
    if model.len() < 2 {
        return Err(Error::invalid("best-matching-unit search needs at least two neurons"));
    }
    check_dim(model, x)?;
    Ok(bmu_pair(model, x))
}

fn bmu_pair(model: &GngModel, x: &[f64]) -> (usize, usize) {
    let (mut first, mut second) = ((usize::MAX, f64::INFINITY), (usize::MAX, f64::INFINITY));
    for (i, n) in model.neurons.iter().enumerate() {
        let d = sq_dist(&n.position, x);
        if d < first.1 {
            second = first;
            first = (i, d);
        } else if d < second.1 {
            second = (i, d);
        }
    }
    (first.0, second.0)
}

/// Index of and squared distance to the nearest neuron.
pub fn nearest_neuron(model: &GngModel, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, n) in model.neurons.iter().enumerate() {
        let d = sq_dist(&n.position, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Presents one signal: error accumulation, winner and neighbour moves,
/// Hebbian edge refresh, edge ageing and pruning.
///
/// Returns the squared distance from the signal to its winner.
pub fn adapt_step(model: &mut GngModel, x: &[f64], params: &GngParams) -> Result<f64> {
    let (s1, s2) = find_bmu(model, x)?;
    let d2 = sq_dist(&model.neurons[s1].position, x);
    model.neurons[s1].error += d2;

    for (w, xi) in model.neurons[s1].position.iter_mut().zip(x) {
        *w += params.eps_b * (xi - *w);
    }
    for nb in model.neighbors(s1) {
        for (w, xi) in model.neurons[nb].position.iter_mut().zip(x) {
            *w += params.eps_n * (xi - *w);
        }
    }

    for e in model.edges.iter_mut().filter(|e| e.touches(s1)) {
        e.age += 1;
    }
    model.connect(s1, s2);

    // Only edges at s1 aged, so only their endpoints can become isolated.
    if model.edges.iter().any(|e| e.age > params.max_age) {
        let mut touched = Vec::new();
        model.edges.retain(|e| {
            let keep = e.age <= params.max_age;
            if !keep {
                touched.extend([e.a, e.b]);
            }
            keep
        });
        touched.sort_unstable();
        touched.dedup();
        for &i in touched.iter().rev() {
            if model.len() > 2 && model.degree(i) == 0 {
                model.remove_neuron(i);
            }
        }
    }
    Ok(d2)
}

/// Inserts a neuron halfway between the highest-error neuron q and its
/// highest-error neighbour f. Returns the new index, or `None` when q has
/// no neighbours.
pub fn insert_neuron(model: &mut GngModel, params: &GngParams, diag: &mut Diagnostics) -> Result<Option<usize>> {
    if model.len() < 2 {
        return Err(Error::invalid("insertion needs at least two neurons"));
    }
    let q = argmax_error(model, 0..model.len());
    let neighbors = model.neighbors(q);
    if neighbors.is_empty() {
        diag.push(codes::BMU_NO_NEIGHBORS, format!("neuron {q} has no neighbours; insertion skipped"));
        return Ok(None);
    }
    let f = argmax_error(model, neighbors.into_iter());

    let position: Vec<f64> = model.neurons[q]
        .position
        .iter()
        .zip(&model.neurons[f].position)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    if let Some(i) = model.edge_index(q, f) {
        model.edges.remove(i);
    }
    model.neurons[q].error *= params.alpha;
    model.neurons[f].error *= params.alpha;
    let r = model.len();
    model.neurons.push(Neuron { position, error: model.neurons[q].error });
    model.connect(r, q);
    model.connect(r, f);
    Ok(Some(r))
}

fn argmax_error(model: &GngModel, candidates: impl Iterator<Item = usize>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for i in candidates {
        let e = model.neurons[i].error;
        if best.is_none_or(|(_, b)| e > b) {
            best = Some((i, e));
        }
    }
    best.map(|b| b.0).expect("non-empty candidate set")
}

/// Mean squared distance from each point to its nearest neuron.
pub fn quantization_error(model: &GngModel, data: &[Vec<f64>]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("quantization error of an empty data set"));
    }
    if model.is_empty() {
        return Err(Error::invalid("quantization error of an empty model"));
    }
    for x in data {
        check_dim(model, x)?;
    }
    // Distances in parallel, summed in order so the result is reproducible.
    let d2: Vec<f64> = data.par_iter().map(|x| nearest_neuron(model, x).1).collect();
    Ok(d2.iter().sum::<f64>() / data.len() as f64)
}

/// Removes neurons that are the nearest neuron of no data point, keeping at
/// least two. Returns how many were removed.
pub fn prune_dead_units(model: &mut GngModel, data: &[Vec<f64>]) -> usize {
    let mut wins = vec![0usize; model.len()];
    let winners: Vec<usize> = data.par_iter().map(|x| nearest_neuron(model, x).0).collect();
    for w in winners {
        wins[w] += 1;
    }
    let mut removed = 0;
    for i in (0..model.len()).rev() {
        if wins[i] == 0 && model.len() > 2 {
            model.remove_neuron(i);
            removed += 1;
        }
    }
    removed
}

#[derive(Debug, Clone)]
pub struct GngTraining {
    pub model: GngModel,
    pub epochs: usize,
    /// Mean winner distance per pass.
    pub pass_errors: Vec<f64>,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

fn validate_data(data: &[Vec<f64>]) -> Result<usize> {
    let first = data.first().ok_or_else(|| Error::invalid("no data points"))?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::invalid("data points have zero dimensions"));
    }
    for p in data {
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: p.len() });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("data contains non-finite values"));
        }
    }
    Ok(dim)
}

/// Trains a growing neural gas up to `params.m_target` neurons.
///
/// Signals are presented in a seeded shuffled order, one pass per epoch.
/// Training stops once the target size is reached and the per-pass mean
/// quantization error changes by less than `stability_tol` (relative)
/// between two consecutive full-size passes, or after `max_epochs`.
pub fn train(data: &[Vec<f64>], params: &GngParams) -> Result<GngTraining> {
    params.validate()?;
    validate_data(data)?;
    if params.m_target > data.len() {
        return Err(Error::invalid(format!(
            "m_target={} exceeds the number of data points ({})",
            params.m_target,
            data.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let first = rng.random_range(0..data.len());
    let distinct: Vec<usize> = (0..data.len()).filter(|&i| data[i] != data[first]).collect();
    if distinct.is_empty() {
        return Err(Error::invalid("need at least two distinct data points"));
    }
    let second = distinct[rng.random_range(0..distinct.len())];

    let mut model = GngModel::from_positions(vec![data[first].clone(), data[second].clone()]);
    let mut diagnostics = Diagnostics::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut signals = 0usize;
    let mut pass_errors = Vec::new();
    let mut full_size_passes = 0;
    let mut converged = false;
    let mut epochs = 0;

    while epochs < params.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        for &i in &order {
            adapt_step(&mut model, &data[i], params)?;
            signals += 1;
            if signals.is_multiple_of(params.insert_interval) && model.len() < params.m_target {
                insert_neuron(&mut model, params, &mut diagnostics)?;
            }
        }
        for n in &mut model.neurons {
            n.error *= params.beta;
        }
        let pass_error = quantization_error(&model, data)?;
        pass_errors.push(pass_error);

        if model.len() == params.m_target {
            full_size_passes += 1;
            // Stable means the error moved less than the tolerance across
            // each of the last two consecutive pass transitions.
            if full_size_passes >= 3 {
                let k = pass_errors.len();
                let change = |prev: f64, cur: f64| if prev > 0.0 { (prev - cur).abs() / prev } else { (prev - cur).abs() };
                if change(pass_errors[k - 2], pass_errors[k - 1]) < params.stability_tol
                    && change(pass_errors[k - 3], pass_errors[k - 2]) < params.stability_tol
                {
                    converged = true;
                    break;
                }
            }
        } else {
            full_size_passes = 0;
        }
    }
    let dead = prune_dead_units(&mut model, data);
    if dead > 0 {
        diagnostics.push(codes::GNG_DEAD_UNITS, format!("removed {dead} neurons that won no training sample"));
    }
    if !converged {
        diagnostics.push(
            codes::GNG_MAX_EPOCHS,
            format!("stopped at max_epochs={} with {} neurons", params.max_epochs, model.len()),
        );
    }
    Ok(GngTraining { model, epochs, pass_errors, converged, diagnostics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub candidates: Vec<usize>,
    pub errors: Vec<f64>,
    pub chosen: usize,
    pub flat: bool,
}

/// Default candidate sizes for point data.
pub const ELBOW_CANDIDATES: [usize; 7] = [4, 8, 16, 32, 64, 128, 256];

/// Picks the curve point farthest below the chord joining the first and
/// last points, with both axes rescaled to [0, 1].
pub fn elbow_index(xs: &[f64], ys: &[f64]) -> Option<usize> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return None;
    }
    let (x0, x1) = (xs[0], xs[n - 1]);
    let (y0, y1) = (ys[0], ys[n - 1]);
    if x1 == x0 || y0 == y1 {
        return None;
    }
    // Normalized so the chord runs from (0,1) to (1,0): distance below it
    // is proportional to 1 - x - y.
    let mut best: Option<(usize, f64)> = None;
    for i in 1..n - 1 {
        let x = (xs[i] - x0) / (x1 - x0);
        let y = (ys[i] - y1) / (y0 - y1);
        let below = (1.0 - x - y) / std::f64::consts::SQRT_2;
        if below > 1e-9 && best.is_none_or(|(_, b)| below > b) {
            best = Some((i, below));
        }
    }
    best.map(|b| b.0)
}

/// Chooses the GNG size for point data from the k-means++ quantization
/// error curve over `candidates`.
pub fn select_m_elbow(data: &[Vec<f64>], candidates: &[usize], seed: u64, diag: &mut Diagnostics) -> Result<ElbowCurve> {
    validate_data(data)?;
    if candidates.len() < 3 || candidates.windows(2).any(|w| w[0] >= w[1]) || candidates[0] < 1 {
        return Err(Error::invalid("need at least three ascending positive candidates"));
    }
    let usable: Vec<usize> = candidates.iter().copied().filter(|&m| m <= data.len()).collect();
    if usable.len() < 3 {
        return Err(Error::invalid(format!(
            "fewer than three candidates fit {} data points",
            data.len()
        )));
    }
    let config = KMeansConfig { restarts: 3, max_iter: 100 };
    let mut errors = Vec::with_capacity(usable.len());
    for &m in &usable {
        let mut local = Diagnostics::new();
        let km = kmeans_with(data, m, seed.wrapping_add(m as u64), config, &mut local)?;
        errors.push(km.inertia / data.len() as f64);
    }
    errors_curve(usable, errors, diag)
}

/// Elbow selection on a precomputed error curve.
pub fn errors_curve(candidates: Vec<usize>, errors: Vec<f64>, diag: &mut Diagnostics) -> Result<ElbowCurve> {
    let xs: Vec<f64> = candidates.iter().map(|&m| m as f64).collect();
    let (chosen, flat) = match elbow_index(&xs, &errors) {
        Some(i) => (candidates[i], false),
        None => {
            diag.push(codes::ELBOW_FLAT, "quantization error curve has no elbow; using smallest candidate");
            (candidates[0], true)
        }
    };
    Ok(ElbowCurve { candidates, errors, chosen, flat })
}
