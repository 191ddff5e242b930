//! C interface to the `feet` evaluation harness.
//!
//! Fallible functions return a [`FeetStatus`]; when it is not
//! `FEET_STATUS_OK` a message is available from [`feet_last_error`] on the
//! calling thread. Embedding sets and prediction sets are opaque handles:
//! create them with the `*_load` functions and release them with the
//! matching `*_free`. Panics never cross the boundary; they surface as
//! `FEET_STATUS_PANIC`.
//!
//! Strings passed in must be NUL-terminated UTF-8. Pointers returned by the
//! library are owned by it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use feet::embedding_io::{
    load_embedding_set, save_embedding_set, validate_manifest, EmbeddingSet, RunManifest,
};
use feet::metrics::{auprc, auroc, bootstrap_ci, Averaging, BootstrapConfig, MetricKind, MetricSpec};
use feet::probes::Predictions;
use feet::runner::{execute_run, read_predictions, RunOptions};
use feet::sampling::derive_cell_seed;
use feet::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeetStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Malformed embedding or predictions file.
    Format = 4,
    /// Manifest could not be parsed or failed validation.
    Manifest = 5,
    InvalidArgument = 6,
    /// The metric is undefined on this input (e.g. a single class).
    Undefined = 7,
    /// Run directory is occupied, or belongs to a different manifest.
    RunDirectory = 8,
    /// The run finished but some cells failed.
    CellsFailed = 9,
    BufferTooSmall = 10,
    IndexOutOfRange = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeetAveraging {
    Macro = 0,
    Micro = 1,
    /// Scores of `pos_class` only.
    Binary = 2,
}

/// A bootstrap estimate. Undefined values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeetEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub half_width: f64,
    pub n: usize,
    pub replicates: u32,
    pub dropped: u32,
}

/// Opaque embedding set.
pub struct FeetEmbeddingSet {
    inner: EmbeddingSet,
}

/// Opaque prediction set.
pub struct FeetPredictions {
    inner: Predictions,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FeetStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => FeetStatus::Io,
            Error::MalformedRecord { .. }
            | Error::DimMismatch { .. }
            | Error::DuplicateId { .. }
            | Error::NonFiniteValue { .. }
            | Error::LabelOutOfRange { .. }
            | Error::Json(_)
            | Error::Csv(_) => FeetStatus::Format,
            Error::Manifest(_) | Error::Validation(_) => FeetStatus::Manifest,
            Error::DegenerateLabels | Error::NoPositives | Error::AllResamplesUndefined => {
                FeetStatus::Undefined
            }
            Error::RunDirNotEmpty(_) | Error::ManifestDrift { .. } => FeetStatus::RunDirectory,
            _ => FeetStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FeetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FeetStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            FeetStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FeetStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FeetStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn or_nan(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn feet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn feet_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a `.feet.jsonl` or `.feet.bin` file (detected by content).
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn feet_embedding_set_load(
    path: *const c_char,
    out: *mut *mut FeetEmbeddingSet,
) -> FeetStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let inner = load_embedding_set(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(FeetEmbeddingSet { inner }));
        Ok(())
    })
}

/// Writes `set` to `path`; the encoding follows the extension (`.bin` for
/// binary, anything else canonical).
///
/// # Safety
/// `set` must come from [`feet_embedding_set_load`]; `path` must be a valid
/// C string.
#[no_mangle]
pub unsafe extern "C" fn feet_embedding_set_save(
    set: *const FeetEmbeddingSet,
    path: *const c_char,
) -> FeetStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        save_embedding_set(&set.inner, PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of records; 0 for NULL.
///
/// # Safety
/// `set` must be NULL or come from [`feet_embedding_set_load`].
#[no_mangle]
pub unsafe extern "C" fn feet_embedding_set_count(set: *const FeetEmbeddingSet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.records.len())
}

/// Vector dimension; 0 for NULL.
///
/// # Safety
/// `set` must be NULL or come from [`feet_embedding_set_load`].
#[no_mangle]
pub unsafe extern "C" fn feet_embedding_set_dim(set: *const FeetEmbeddingSet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.dim)
}

/// Number of classes; 0 for NULL.
///
/// # Safety
/// `set` must be NULL or come from [`feet_embedding_set_load`].
#[no_mangle]
pub unsafe extern "C" fn feet_embedding_set_num_classes(set: *const FeetEmbeddingSet) -> u32 {
    set.as_ref().map_or(0, |s| s.inner.num_classes)
}

/// Copies record `index` into `buf` (at least `dim` floats) and its label
/// into `label`.
///
/// # Safety
/// `set` must come from [`feet_embedding_set_load`]; `buf` must hold `len`
/// floats; `label` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn feet_embedding_set_record(
    set: *const FeetEmbeddingSet,
    index: usize,
    buf: *mut f32,
    len: usize,
    label: *mut u32,
) -> FeetStatus {
    guard(|| {
        let set = &set.as_ref().ok_or_else(|| null("set"))?.inner;
        let record = set.records.get(index).ok_or_else(|| {
            Failure(
                FeetStatus::IndexOutOfRange,
                format!("index {index} outside 0..{}", set.records.len()),
            )
        })?;
        if len < set.dim {
            return Err(Failure(
                FeetStatus::BufferTooSmall,
                format!("buffer holds {len} floats, need {}", set.dim),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        *out_arg(label, "label")? = record.label;
        std::slice::from_raw_parts_mut(buf, set.dim).copy_from_slice(&record.vector);
        Ok(())
    })
}

/// # Safety
/// `set` must be NULL or come from [`feet_embedding_set_load`], and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn feet_embedding_set_free(set: *mut FeetEmbeddingSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Loads a predictions JSONL file (`id`, `label`, `scores` per line).
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn feet_predictions_load(
    path: *const c_char,
    out: *mut *mut FeetPredictions,
) -> FeetStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let inner = read_predictions(std::path::Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(FeetPredictions { inner }));
        Ok(())
    })
}

/// Number of predictions; 0 for NULL.
///
/// # Safety
/// `preds` must be NULL or come from [`feet_predictions_load`].
#[no_mangle]
pub unsafe extern "C" fn feet_predictions_len(preds: *const FeetPredictions) -> usize {
    preds.as_ref().map_or(0, |p| p.inner.len())
}

/// # Safety
/// `preds` must be NULL or come from [`feet_predictions_load`], and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn feet_predictions_free(preds: *mut FeetPredictions) {
    if !preds.is_null() {
        drop(Box::from_raw(preds));
    }
}

/// Point value and percentile-bootstrap 95% interval of `metric`
/// (`accuracy`, `precision`, `recall`, `f1`, `auroc`, `auprc`).
///
/// # Safety
/// `preds` must come from [`feet_predictions_load`]; `metric` must be a
/// valid C string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn feet_bootstrap_ci(
    preds: *const FeetPredictions,
    metric: *const c_char,
    averaging: FeetAveraging,
    pos_class: u32,
    replicates: u32,
    seed: u64,
    out: *mut FeetEstimate,
) -> FeetStatus {
    guard(|| {
        let preds = &preds.as_ref().ok_or_else(|| null("preds"))?.inner;
        let kind: MetricKind = str_arg(metric, "metric")?.parse()?;
        let out = out_arg(out, "out")?;
        let averaging = match averaging {
            FeetAveraging::Macro => Averaging::Macro,
            FeetAveraging::Micro => Averaging::Micro,
            FeetAveraging::Binary => Averaging::Binary(pos_class),
        };
        let spec = MetricSpec::new(kind, averaging, pos_class);
        let est = bootstrap_ci(preds, &spec, &BootstrapConfig { replicates, seed })?;
        *out = FeetEstimate {
            point: or_nan(est.point),
            ci_low: or_nan(est.ci_low),
            ci_high: or_nan(est.ci_high),
            half_width: or_nan(est.half_width),
            n: est.n,
            replicates: est.replicates,
            dropped: est.dropped,
        };
        Ok(())
    })
}

/// Binary AUROC; `labels[i]` non-zero marks a positive.
///
/// # Safety
/// `scores` and `labels` must each hold `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn feet_auroc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> FeetStatus {
    guard(|| {
        let (s, l) = (slice_arg(scores, n, "scores")?, slice_arg(labels, n, "labels")?);
        let l: Vec<bool> = l.iter().map(|&v| v != 0).collect();
        *out_arg(out, "out")? = auroc(s, &l)?;
        Ok(())
    })
}

/// Binary average precision; `labels[i]` non-zero marks a positive.
///
/// # Safety
/// `scores` and `labels` must each hold `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn feet_auprc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> FeetStatus {
    guard(|| {
        let (s, l) = (slice_arg(scores, n, "scores")?, slice_arg(labels, n, "labels")?);
        let l: Vec<bool> = l.iter().map(|&v| v != 0).collect();
        *out_arg(out, "out")? = auprc(s, &l)?;
        Ok(())
    })
}

/// Seed for the cell `key` (`model|task|regime|shot|replicate`).
///
/// # Safety
/// `key` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn feet_derive_cell_seed(
    master_seed: u64,
    key: *const c_char,
    out: *mut u64,
) -> FeetStatus {
    guard(|| {
        *out_arg(out, "out")? = derive_cell_seed(master_seed, str_arg(key, "key")?);
        Ok(())
    })
}

/// Checks a manifest and the files it references. `errors` (may be NULL)
/// receives the number of error findings; on failure the findings are the
/// last-error message, one per line.
///
/// # Safety
/// `path` must be a valid C string; `errors` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn feet_validate_manifest(path: *const c_char, errors: *mut usize) -> FeetStatus {
    guard(|| {
        if let Some(e) = errors.as_mut() {
            *e = 0;
        }
        let manifest = RunManifest::load(str_arg(path, "path")?)?;
        let findings = validate_manifest(&manifest);
        let n = findings.iter().filter(|f| f.is_error()).count();
        if let Some(e) = errors.as_mut() {
            *e = n;
        }
        if n > 0 {
            let text: Vec<String> = findings.iter().map(|f| f.to_string()).collect();
            return Err(Failure(FeetStatus::Manifest, text.join("\n")));
        }
        Ok(())
    })
}

/// Executes (or with `resume`, continues) the run described by the manifest
/// at `manifest_path`, writing into `out_dir`.
///
/// # Safety
/// Both paths must be valid C strings.
#[no_mangle]
pub unsafe extern "C" fn feet_run(
    manifest_path: *const c_char,
    out_dir: *const c_char,
    parallelism: usize,
    resume: bool,
) -> FeetStatus {
    guard(|| {
        let manifest = RunManifest::load(str_arg(manifest_path, "manifest_path")?)?;
        let out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let opts = RunOptions {
            parallelism: parallelism.max(1),
            resume,
            max_cells: None,
        };
        let outcome = execute_run(&manifest, &out, &opts)?;
        if outcome.exit_code() != 0 {
            let failed: Vec<String> = outcome
                .state
                .cells
                .iter()
                .filter_map(|c| c.error.as_ref().map(|e| format!("{}: {e}", c.key)))
                .collect();
            return Err(Failure(FeetStatus::CellsFailed, failed.join("\n")));
        }
        Ok(())
    })
}
