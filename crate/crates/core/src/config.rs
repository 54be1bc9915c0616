use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gng::{GngParams, ELBOW_CANDIDATES};
use crate::select::{RefineMode, DEFAULT_VARIANCE_THRESHOLD};

/// Default GNG size for images.
pub const IMAGE_DEFAULT_M: usize = 100;
pub const DEFAULT_K_MAX: usize = 50;
/// Images larger than this train the GNG on a subsample of pixels.
pub const MAX_TRAINING_PIXELS: usize = 500_000;

/// GNG size: fixed, or chosen automatically (elbow for points, 100 for images).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeuronCount {
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for NeuronCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NeuronCount::Auto => s.serialize_str("auto"),
            NeuronCount::Fixed(m) => s.serialize_u64(*m as u64),
        }
    }
}

impl<'de> Deserialize<'de> for NeuronCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(m) => Ok(NeuronCount::Fixed(m as usize)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for NeuronCount {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(NeuronCount::Auto);
        }
        s.parse::<usize>()
            .map(NeuronCount::Fixed)
            .map_err(|_| format!("expected \"auto\" or a positive integer, got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    #[default]
    Rgb,
    Rgbxy,
}

impl std::str::FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(FeatureMode::Rgb),
            "rgbxy" => Ok(FeatureMode::Rgbxy),
            _ => Err(format!("unknown feature mode {s:?} (rgb | rgbxy)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub m: NeuronCount,
    /// Rank of the neighbour defining each local scale.
    pub local_scale_k: usize,
    pub variance_threshold: f64,
    pub refine_mode: RefineMode,
    pub k_max: usize,
    pub feature_mode: FeatureMode,
    pub elbow_candidates: Vec<usize>,
    /// `None` trains on every pixel regardless of image size.
    pub max_training_pixels: Option<usize>,
    pub median_filter: bool,
    pub gng: GngSettings,
}

/// GNG parameters other than size and seed, which come from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GngSettings {
    pub eps_b: f64,
    pub eps_n: f64,
    pub insert_interval: usize,
    pub max_age: u32,
    pub alpha: f64,
    pub beta: f64,
    pub stability_tol: f64,
    pub max_epochs: usize,
}

impl Default for GngSettings {
    fn default() -> Self {
        let p = GngParams::default();
        Self {
            eps_b: p.eps_b,
            eps_n: p.eps_n,
            insert_interval: p.insert_interval,
            max_age: p.max_age,
            alpha: p.alpha,
            beta: p.beta,
            stability_tol: p.stability_tol,
            max_epochs: p.max_epochs,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            m: NeuronCount::Auto,
            local_scale_k: 1,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            refine_mode: RefineMode::EigenvectorPrefix,
            k_max: DEFAULT_K_MAX,
            feature_mode: FeatureMode::Rgb,
            elbow_candidates: ELBOW_CANDIDATES.to_vec(),
            max_training_pixels: Some(MAX_TRAINING_PIXELS),
            median_filter: true,
            gng: GngSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn gng_params(&self, m_target: usize) -> GngParams {
        let g = &self.gng;
        GngParams {
            m_target,
            eps_b: g.eps_b,
            eps_n: g.eps_n,
            insert_interval: g.insert_interval,
            max_age: g.max_age,
            alpha: g.alpha,
            beta: g.beta,
            stability_tol: g.stability_tol,
            max_epochs: g.max_epochs,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.local_scale_k == 0 {
            return Err(Error::invalid("local_scale_k must be positive"));
        }
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return Err(Error::invalid("variance_threshold must be in (0, 1]"));
        }
        if self.k_max < 2 {
            return Err(Error::invalid("k_max must be at least 2"));
        }
        if let NeuronCount::Fixed(m) = self.m {
            if m < 2 {
                return Err(Error::invalid("m must be at least 2"));
            }
        }
        self.gng_params(2).validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { line: e.line() as u64, message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
