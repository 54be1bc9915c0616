//! C ABI for spectral-gng.
//!
//! Configurations and results are opaque handles created and freed by this
//! library. Every fallible call returns an [`SgStatus`]; on failure the
//! message is available from [`sg_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spectral_gng::eval::{clustering_accuracy, f_measure_foreground, pri, segmentation_covering, vi};
use spectral_gng::image::{segment_image, RgbImage};
use spectral_gng::report::PipelineReport;
use spectral_gng::{cluster_points, Error, NeuronCount, RunConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    Parse = 4,
    Io = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgMetric {
    FMeasure = 0,
    Covering = 1,
    Pri = 2,
    Vi = 3,
    Accuracy = 4,
}

/// Run configuration handle.
pub struct SgConfig {
    inner: RunConfig,
}

/// Clustering or segmentation result handle.
pub struct SgResult {
    labels: Vec<usize>,
    chosen_k: usize,
    neurons: usize,
    /// Chosen eigenvectors, numbered from 1.
    chosen: Vec<usize>,
    report: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SgStatus {
    match e.root() {
        Error::InvalidInput(_) | Error::Image(_) => SgStatus::InvalidInput,
        Error::DimensionMismatch { .. } => SgStatus::DimensionMismatch,
        Error::Parse { .. } => SgStatus::Parse,
        Error::Io { .. } => SgStatus::Io,
        _ => SgStatus::Numerical,
    }
}

struct Failure(SgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SgStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SgStatus::Panic
        }
    }
}

/// Message for the last failed call on this thread ("" after a success).
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New configuration with default settings. Free with [`sg_config_free`].
#[no_mangle]
pub extern "C" fn sg_config_new() -> *mut SgConfig {
    Box::into_raw(Box::new(SgConfig { inner: RunConfig::default() }))
}

/// Parses a JSON configuration (missing fields take defaults).
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_config_from_json(json: *const c_char, out: *mut *mut SgConfig) -> SgStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Failure(SgStatus::InvalidInput, "configuration is not UTF-8".into()))?;
        let inner: RunConfig = serde_json::from_str(text)
            .map_err(|e| Failure(SgStatus::Parse, format!("parse error at line {}: {e}", e.line())))?;
        inner.validate()?;
        *out = Box::into_raw(Box::new(SgConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_config_free(config: *mut SgConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn config_mut<'a>(config: *mut SgConfig) -> Result<&'a mut RunConfig, Failure> {
    config.as_mut().map(|c| &mut c.inner).ok_or_else(|| null("config"))
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_config_set_seed(config: *mut SgConfig, seed: u64) -> SgStatus {
    guard(|| {
        config_mut(config)?.seed = seed;
        Ok(())
    })
}

/// Sets the GNG size; 0 selects it automatically.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_config_set_neurons(config: *mut SgConfig, m: usize) -> SgStatus {
    guard(|| {
        let c = config_mut(config)?;
        let previous = c.m;
        c.m = if m == 0 { NeuronCount::Auto } else { NeuronCount::Fixed(m) };
        c.validate().inspect_err(|_| c.m = previous)?;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_config_set_k_max(config: *mut SgConfig, k_max: usize) -> SgStatus {
    guard(|| {
        let c = config_mut(config)?;
        let previous = c.k_max;
        c.k_max = k_max;
        c.validate().inspect_err(|_| c.k_max = previous)?;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_config_set_local_scale_k(config: *mut SgConfig, k: usize) -> SgStatus {
    guard(|| {
        let c = config_mut(config)?;
        let previous = c.local_scale_k;
        c.local_scale_k = k;
        c.validate().inspect_err(|_| c.local_scale_k = previous)?;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_config_set_variance_threshold(config: *mut SgConfig, threshold: f64) -> SgStatus {
    guard(|| {
        let c = config_mut(config)?;
        let previous = c.variance_threshold;
        c.variance_threshold = threshold;
        c.validate().inspect_err(|_| c.variance_threshold = previous)?;
        Ok(())
    })
}

unsafe fn config_or_default(config: *const SgConfig) -> RunConfig {
    config.as_ref().map_or_else(RunConfig::default, |c| c.inner.clone())
}

fn json_cstring(report: &PipelineReport) -> CString {
    CString::new(serde_json::to_string(report).expect("report serializes")).expect("JSON has no NUL bytes")
}

/// Clusters `n` points of dimension `dim` stored row-major in `data`.
/// `config` may be null for defaults. Free the result with [`sg_result_free`].
///
/// # Safety
/// `data` must point to `n * dim` readable doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_cluster_points(
    data: *const f64,
    n: usize,
    dim: usize,
    config: *const SgConfig,
    out: *mut *mut SgResult,
) -> SgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if data.is_null() {
            return Err(null("data"));
        }
        if n == 0 || dim == 0 {
            return Err(Failure(SgStatus::InvalidInput, "n and dim must be positive".into()));
        }
        let len = n.checked_mul(dim).ok_or_else(|| Failure(SgStatus::InvalidInput, "n * dim overflows".into()))?;
        let flat = std::slice::from_raw_parts(data, len);
        let points: Vec<Vec<f64>> = flat.chunks_exact(dim).map(<[f64]>::to_vec).collect();
        let cfg = config_or_default(config);
        let run = cluster_points(&points, &cfg)?;
        let report = PipelineReport::from_points("memory", &cfg, &points, &run, false);
        *out = Box::into_raw(Box::new(SgResult {
            chosen: report.selection.as_ref().map(|s| s.chosen.clone()).unwrap_or_default(),
            report: json_cstring(&report),
            labels: run.point_labels,
            chosen_k: run.outcome.chosen_k,
            neurons: run.model.len(),
        }));
        Ok(())
    })
}

/// Segments a `width` x `height` RGB image stored row-major as 8-bit
/// triples. Labels are one per pixel.
///
/// # Safety
/// `rgb` must point to `width * height * 3` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_segment_rgb(
    rgb: *const u8,
    width: usize,
    height: usize,
    config: *const SgConfig,
    out: *mut *mut SgResult,
) -> SgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if rgb.is_null() {
            return Err(null("rgb"));
        }
        let len = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(3))
            .ok_or_else(|| Failure(SgStatus::InvalidInput, "image size overflows".into()))?;
        let bytes = std::slice::from_raw_parts(rgb, len);
        let image = RgbImage::new(width, height, bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())?;
        let cfg = config_or_default(config);
        let run = segment_image(&image, &cfg)?;
        let dim = match cfg.feature_mode {
            spectral_gng::FeatureMode::Rgb => 3,
            spectral_gng::FeatureMode::Rgbxy => 5,
        };
        let report = PipelineReport::from_image("memory", &cfg, &run, dim, false);
        *out = Box::into_raw(Box::new(SgResult {
            chosen: report.selection.as_ref().map(|s| s.chosen.clone()).unwrap_or_default(),
            report: json_cstring(&report),
            neurons: run.model.as_ref().map_or(0, |m| m.len()),
            chosen_k: run.chosen_k,
            labels: run.labels.labels,
        }));
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_result_free(result: *mut SgResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of labels (points or pixels); 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_result_len(result: *const SgResult) -> usize {
    result.as_ref().map_or(0, |r| r.labels.len())
}

/// Chosen number of clusters; 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_result_chosen_k(result: *const SgResult) -> usize {
    result.as_ref().map_or(0, |r| r.chosen_k)
}

/// Neurons in the trained GNG; 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_result_neuron_count(result: *const SgResult) -> usize {
    result.as_ref().map_or(0, |r| r.neurons)
}

/// Copies the labels into `out`, which holds `capacity` entries.
///
/// # Safety
/// `result` must be a live handle and `out` must have room for `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn sg_result_labels(result: *const SgResult, out: *mut usize, capacity: usize) -> SgStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.labels, out, capacity)
    })
}

/// Copies the chosen eigenvector numbers (from 1) into `out` and stores
/// their count in `count`.
///
/// # Safety
/// `result` and `count` must be valid; `out` must have room for `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn sg_result_chosen_eigenvectors(
    result: *const SgResult,
    out: *mut usize,
    capacity: usize,
    count: *mut usize,
) -> SgStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let count = count.as_mut().ok_or_else(|| null("count"))?;
        *count = r.chosen.len();
        copy_out(&r.chosen, out, capacity)
    })
}

unsafe fn copy_out(src: &[usize], out: *mut usize, capacity: usize) -> Result<(), Failure> {
    if capacity < src.len() {
        return Err(Failure(
            SgStatus::BufferTooSmall,
            format!("buffer holds {capacity} entries, {} needed", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Full JSON report, owned by the result handle.
///
/// # Safety
/// `result` must be null or a live handle; the string lives as long as it.
#[no_mangle]
pub unsafe extern "C" fn sg_result_report_json(result: *const SgResult) -> *const c_char {
    result.as_ref().map_or(ptr::null(), |r| r.report.as_ptr())
}

/// Compares two labellings of `n` elements. For the F-measure, non-zero
/// ground-truth labels are foreground.
///
/// # Safety
/// `pred` and `gt` must point to `n` readable entries; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_metric(
    metric: SgMetric,
    pred: *const usize,
    gt: *const usize,
    n: usize,
    out: *mut f64,
) -> SgStatus {
    guard(|| {
        if pred.is_null() || gt.is_null() {
            return Err(null("labels"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let pred = std::slice::from_raw_parts(pred, n);
        let gt = std::slice::from_raw_parts(gt, n);
        *out = match metric {
            SgMetric::FMeasure => {
                let fg: Vec<bool> = gt.iter().map(|&l| l != 0).collect();
                f_measure_foreground(pred, &fg)?
            }
            SgMetric::Covering => segmentation_covering(pred, gt)?,
            SgMetric::Pri => pri(pred, gt)?,
            SgMetric::Vi => vi(pred, gt)?,
            SgMetric::Accuracy => clustering_accuracy(pred, gt)?,
        };
        Ok(())
    })
}
