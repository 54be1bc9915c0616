//! Image segmentation: color features, GNG over pixels, spectral clustering
//! of neurons, pixel assignment and label smoothing.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{FeatureMode, NeuronCount, RunConfig, IMAGE_DEFAULT_M};
use crate::diag::{codes, Diagnostics};
use crate::error::{Error, Result, Stage, StageExt};
use crate::gng::{train, GngModel};
use crate::pipeline::{assign_to_neurons, cluster_model, ClusterOutcome, Timings};

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image must have at least one pixel"));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, actual: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Result<Self> {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, pixels)
    }

    /// Reads a PNG or binary PPM (P6), chosen by the file's magic bytes.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(b"\x89PNG") {
            decode_png(&bytes)
        } else if bytes.starts_with(b"P6") {
            decode_ppm(&bytes)
        } else {
            Err(Error::Image(format!("{}: not a PNG or binary PPM (P6) file", path.display())))
        }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let data: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        write_png(path, self.width, self.height, png::ColorType::Rgb, None, &data)
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn decode_png(bytes: &[u8]) -> Result<RgbImage> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::Image(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Image("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let pixels = buf[..info.buffer_size()]
        .chunks_exact(channels)
        .map(|c| match channels {
            1 | 2 => [c[0]; 3],
            _ => [c[0], c[1], c[2]],
        })
        .collect();
    RgbImage::new(w, h, pixels)
}

fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let mut reader = BufReader::new(bytes);
    let mut fields = Vec::new();
    // Header: magic, width, height, maxval; '#' comments run to end of line.
    while fields.len() < 4 {
        let mut line = String::new();
        if reader.read_line(&mut line).map_err(|e| Error::Image(e.to_string()))? == 0 {
            return Err(Error::Image("truncated PPM header".into()));
        }
        let content = line.split('#').next().unwrap_or("");
        fields.extend(content.split_whitespace().map(str::to_owned));
    }
    if fields.len() != 4 || fields[0] != "P6" {
        return Err(Error::Image("malformed PPM header".into()));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Image(format!("bad PPM header value {s:?}")));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Image(format!("unsupported PPM maxval {maxval}")));
    }
    let mut data = Vec::new();
    reader.read_to_end(&mut data).map_err(|e| Error::Image(e.to_string()))?;
    if data.len() < w * h * 3 {
        return Err(Error::Image("truncated PPM pixel data".into()));
    }
    let scale = |v: u8| ((v as usize * 255 + maxval / 2) / maxval) as u8;
    let pixels = data[..w * h * 3].chunks_exact(3).map(|c| [scale(c[0]), scale(c[1]), scale(c[2])]).collect();
    RgbImage::new(w, h, pixels)
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    palette: Option<Vec<u8>>,
    data: &[u8],
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    if let Some(p) = palette {
        encoder.set_palette(p);
    }
    let mut writer = encoder.write_header().map_err(|e| Error::Image(e.to_string()))?;
    writer.write_image_data(data).map_err(|e| Error::Image(e.to_string()))?;
    writer.finish().map_err(|e| Error::Image(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub width: usize,
    pub height: usize,
    pub features: Vec<Vec<f64>>,
}

/// RGB in [0, 1]; `Rgbxy` appends `x/(width-1)` and `y/(height-1)` (0 for a
/// single column or row).
pub fn extract_features(image: &RgbImage, mode: FeatureMode) -> ImageFeatures {
    let norm = |v: usize, extent: usize| if extent > 1 { v as f64 / (extent - 1) as f64 } else { 0.0 };
    let features = image
        .pixels
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut f: Vec<f64> = p.iter().map(|&c| c as f64 / 255.0).collect();
            if mode == FeatureMode::Rgbxy {
                f.push(norm(i % image.width, image.width));
                f.push(norm(i / image.width, image.height));
            }
            f
        })
        .collect();
    ImageFeatures { width: image.width, height: image.height, features }
}

/// Per-pixel cluster labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<usize>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, actual: labels.len() });
        }
        Ok(Self { width, height, labels })
    }

    pub fn label_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    /// Indexed PNG with a fixed, well-spread palette (labels beyond 255 are rejected).
    pub fn write_png(&self, path: &Path) -> Result<()> {
        if self.label_count() > 256 {
            return Err(Error::invalid("indexed PNG holds at most 256 labels"));
        }
        let data: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
        let palette: Vec<u8> = (0..self.label_count().max(1)).flat_map(palette_color).collect();
        write_png(path, self.width, self.height, png::ColorType::Indexed, Some(palette), &data)
    }

    /// One CSV row per image row, labels comma-separated.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.labels.len() * 3);
        for row in self.labels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(usize::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a label CSV (as written by [`write_csv`](Self::write_csv)) or an
    /// indexed/grayscale PNG whose sample values are the labels.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(b"\x89PNG") {
            return read_label_png(&bytes);
        }
        let text = String::from_utf8(bytes).map_err(|_| Error::invalid(format!("{}: not UTF-8", path.display())))?;
        let mut rows: Vec<Vec<usize>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<usize>().map_err(|_| Error::Parse {
                        line: i as u64 + 1,
                        message: format!("expected a non-negative integer label, got {:?}", f.trim()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: i as u64 + 1,
                        message: format!("expected {} labels, found {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::invalid(format!("{}: empty label file", path.display())));
        }
        let width = rows[0].len();
        let height = rows.len();
        Self::new(width, height, rows.into_iter().flatten().collect())
    }
}

fn read_label_png(bytes: &[u8]) -> Result<LabelImage> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::Image(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Image("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight
        || !matches!(info.color_type, png::ColorType::Indexed | png::ColorType::Grayscale)
    {
        return Err(Error::Image("label PNG must be 8-bit indexed or grayscale".into()));
    }
    let labels = buf[..info.buffer_size()].iter().map(|&v| v as usize).collect();
    LabelImage::new(info.width as usize, info.height as usize, labels)
}

/// Distinct colors for label `i`: golden-angle hue steps.
fn palette_color(i: usize) -> [u8; 3] {
    let h = (i as f64 * 137.507_764) % 360.0;
    let (s, v) = (0.65, if i.is_multiple_of(2) { 0.95 } else { 0.75 });
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|u| ((u + m) * 255.0).round() as u8)
}

/// Each pixel takes the label of its nearest neuron.
pub fn assign_pixels(model: &GngModel, neuron_labels: &[usize], features: &ImageFeatures) -> Result<LabelImage> {
    if neuron_labels.len() != model.len() {
        return Err(Error::DimensionMismatch { expected: model.len(), actual: neuron_labels.len() });
    }
    if let Some(f) = features.features.first() {
        if f.len() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), actual: f.len() });
        }
    }
    let labels = assign_to_neurons(model, neuron_labels, &features.features);
    LabelImage::new(features.width, features.height, labels)
}

/// Replaces each label by the most frequent label in its clipped 3×3
/// window; ties keep the centre label, then prefer the smaller label.
pub fn median_filter_3x3(image: &LabelImage) -> LabelImage {
    let (w, h) = (image.width, image.height);
    let k = image.label_count();
    let labels = (0..w * h)
        .into_par_iter()
        .map_init(
            || vec![0u8; k],
            |counts, i| {
                let (x, y) = (i % w, i / w);
                let centre = image.labels[i];
                let mut seen = Vec::with_capacity(9);
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let l = image.labels[ny * w + nx];
                        if counts[l] == 0 {
                            seen.push(l);
                        }
                        counts[l] += 1;
                    }
                }
                let mut best = centre;
                for &l in &seen {
                    let better = counts[l] > counts[best] || (counts[l] == counts[best] && best != centre && l < best);
                    if better {
                        best = l;
                    }
                }
                for &l in &seen {
                    counts[l] = 0;
                }
                best
            },
        )
        .collect();
    LabelImage { width: w, height: h, labels }
}

/// Result of segmenting one image.
#[derive(Debug, Clone)]
pub struct ImageRun {
    pub labels: LabelImage,
    pub m_requested: NeuronCount,
    /// `None` when the image has fewer than two distinct feature vectors.
    pub model: Option<GngModel>,
    pub gng_epochs: usize,
    pub gng_converged: bool,
    pub training_pixels: usize,
    pub outcome: Option<ClusterOutcome>,
    pub chosen_k: usize,
    pub diagnostics: Diagnostics,
    pub timings: Timings,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Full image pipeline: features → GNG (m = 100 unless fixed) → spectral
/// stage → per-pixel labels → optional mode filter.
pub fn segment_image(image: &RgbImage, cfg: &RunConfig) -> Result<ImageRun> {
    cfg.validate().stage(Stage::Input)?;
    let start = Instant::now();
    let mut diag = Diagnostics::new();
    let mut timings = Timings::default();
    let features = extract_features(image, cfg.feature_mode);
    let n = features.features.len();

    let mut distinct = features.features.clone();
    distinct.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < 2 {
        diag.push(codes::SINGLE_CLUSTER, "image has a single distinct feature vector; one segment");
        timings.total_ms = ms(start);
        return Ok(ImageRun {
            labels: LabelImage::new(image.width, image.height, vec![0; n])?,
            m_requested: cfg.m,
            model: None,
            gng_epochs: 0,
            gng_converged: true,
            training_pixels: 0,
            outcome: None,
            chosen_k: 1,
            diagnostics: diag,
            timings,
        });
    }

    let mut m_target = match cfg.m {
        NeuronCount::Fixed(m) => m,
        NeuronCount::Auto => IMAGE_DEFAULT_M,
    };
    let training: Vec<Vec<f64>> = match cfg.max_training_pixels {
        Some(cap) if n > cap => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_1A6E);
            let mut idx = sample(&mut rng, n, cap).into_vec();
            idx.sort_unstable();
            diag.push(codes::DOWNSAMPLED, format!("GNG trained on {cap} of {n} pixels"));
            idx.into_iter().map(|i| features.features[i].clone()).collect()
        }
        _ => features.features.clone(),
    };
    if m_target > training.len() {
        diag.push(
            codes::TOO_FEW_NEURONS,
            format!("m={m_target} exceeds the {} training pixels; using {}", training.len(), training.len()),
        );
        m_target = training.len();
    }

    let t = Instant::now();
    let trained = train(&training, &cfg.gng_params(m_target.max(2))).stage(Stage::Gng)?;
    diag.extend(trained.diagnostics);
    timings.gng_ms = ms(t);

    let t = Instant::now();
    let outcome = cluster_model(&trained.model, &cfg.into(), &mut diag)?;
    timings.spectral_ms = ms(t);

    let t = Instant::now();
    let mut labels = assign_pixels(&trained.model, &outcome.labels, &features).stage(Stage::Assignment)?;
    if cfg.median_filter {
        labels = median_filter_3x3(&labels);
    }
    let (dense, _) = crate::pipeline::densify_labels(&labels.labels);
    labels.labels = dense;
    timings.assignment_ms = ms(t);
    timings.total_ms = ms(start);

    Ok(ImageRun {
        labels,
        m_requested: cfg.m,
        model: Some(trained.model),
        gng_epochs: trained.epochs,
        gng_converged: trained.converged,
        training_pixels: training.len(),
        chosen_k: outcome.chosen_k,
        outcome: Some(outcome),
        diagnostics: diag,
        timings,
    })
}
