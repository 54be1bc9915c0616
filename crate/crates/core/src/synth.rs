//! Seeded synthetic point sets with known labels.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One annulus: points uniform in area between `radius ± width/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub radius: f64,
    pub width: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 2],
    pub sigma: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticSpec {
    Rings { rings: Vec<Ring> },
    Blobs { blobs: Vec<Blob> },
    /// Rings plus uniform noise over their bounding box; noise points get the
    /// label after the last ring.
    RingsWithNoise { rings: Vec<Ring>, noise: usize },
}

/// Default ring width.
pub const RING_WIDTH: f64 = 0.3;

impl SyntheticSpec {
    /// Radii 1, 3, 5 with `per_ring` points each.
    pub fn three_rings(per_ring: usize) -> Self {
        SyntheticSpec::Rings { rings: three_ring_list(per_ring) }
    }

    /// 900 points on rings of radii 1, 6, 11 with 120, 300, 480 points and
    /// width 0.1: gaps wide enough for a 32-neuron GNG to keep rings apart.
    pub fn spaced_rings() -> Self {
        let rings = [(1.0, 120), (6.0, 300), (11.0, 480)]
            .iter()
            .map(|&(radius, count)| Ring { radius, width: 0.1, count })
            .collect();
        SyntheticSpec::Rings { rings }
    }

    /// Three blobs with centers 10σ apart on a triangle.
    pub fn three_blobs(per_blob: usize, sigma: f64) -> Self {
        let d = 10.0 * sigma;
        let centers = [[0.0, 0.0], [d, 0.0], [d / 2.0, d * 3f64.sqrt() / 2.0]];
        SyntheticSpec::Blobs {
            blobs: centers.iter().map(|&center| Blob { center, sigma, count: per_blob }).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let check_rings = |rings: &[Ring]| -> Result<()> {
            if rings.is_empty() {
                return Err(Error::invalid("at least one ring is required"));
            }
            for r in rings {
                if r.count == 0 || r.radius.is_nan() || r.radius <= 0.0 || r.width.is_nan() || r.width < 0.0 || r.width > 2.0 * r.radius {
                    return Err(Error::invalid(format!("invalid ring {r:?}")));
                }
            }
            Ok(())
        };
        match self {
            SyntheticSpec::Rings { rings } => check_rings(rings),
            SyntheticSpec::RingsWithNoise { rings, noise } => {
                check_rings(rings)?;
                if *noise == 0 {
                    return Err(Error::invalid("noise count must be positive"));
                }
                Ok(())
            }
            SyntheticSpec::Blobs { blobs } => {
                if blobs.is_empty() {
                    return Err(Error::invalid("at least one blob is required"));
                }
                for b in blobs {
                    if b.count == 0 || b.sigma.is_nan() || b.sigma < 0.0 || !b.center.iter().all(|c| c.is_finite()) {
                        return Err(Error::invalid(format!("invalid blob {b:?}")));
                    }
                }
                Ok(())
            }
        }
    }
}

fn three_ring_list(per_ring: usize) -> Vec<Ring> {
    [1.0, 3.0, 5.0].iter().map(|&radius| Ring { radius, width: RING_WIDTH, count: per_ring }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Writes `x,y,label` rows with a header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_csv_to(self, std::io::BufWriter::new(file))
    }
}

fn ring_point(rng: &mut ChaCha8Rng, r: &Ring) -> Vec<f64> {
    let inner = (r.radius - r.width / 2.0).max(0.0);
    let outer = r.radius + r.width / 2.0;
    // Inverse-CDF sampling for area-uniform radius.
    let u: f64 = rng.random();
    let rho = (inner * inner + u * (outer * outer - inner * inner)).sqrt();
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    vec![rho * theta.cos(), rho * theta.sin()]
}

/// Generates the dataset; the same spec and seed always give the same points.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let add_rings = |rng: &mut ChaCha8Rng, rings: &[Ring], points: &mut Vec<Vec<f64>>, labels: &mut Vec<usize>| {
        for (label, r) in rings.iter().enumerate() {
            for _ in 0..r.count {
                points.push(ring_point(rng, r));
                labels.push(label);
            }
        }
    };
    match spec {
        SyntheticSpec::Rings { rings } => add_rings(&mut rng, rings, &mut points, &mut labels),
        SyntheticSpec::RingsWithNoise { rings, noise } => {
            add_rings(&mut rng, rings, &mut points, &mut labels);
            let extent = rings.iter().map(|r| r.radius + r.width / 2.0).fold(0.0, f64::max);
            for _ in 0..*noise {
                points.push(vec![rng.random_range(-extent..=extent), rng.random_range(-extent..=extent)]);
                labels.push(rings.len());
            }
        }
        SyntheticSpec::Blobs { blobs } => {
            for (label, b) in blobs.iter().enumerate() {
                let normal = Normal::new(0.0, b.sigma).map_err(|e| Error::invalid(e.to_string()))?;
                for _ in 0..b.count {
                    points.push(vec![b.center[0] + normal.sample(&mut rng), b.center[1] + normal.sample(&mut rng)]);
                    labels.push(label);
                }
            }
        }
    }
    Ok(Dataset { points, labels })
}

/// Writes the dataset as CSV to any writer (used for stdout).
pub fn write_csv_to<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(["x", "y", "label"]).map_err(wrap)?;
    for (p, l) in data.points.iter().zip(&data.labels) {
        w.write_record([format!("{}", p[0]), format!("{}", p[1]), l.to_string()]).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}
