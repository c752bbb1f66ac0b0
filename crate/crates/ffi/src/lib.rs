//! C ABI over the metaopt toolkit.
//!
//! Every fallible function returns a [`MoStatus`]. On failure the message is
//! retrievable with [`mo_last_error_message`] from the same thread until the
//! next failing call. Strings handed out by the library are released with
//! [`mo_string_free`]; handles have their own `*_free` functions. Panics
//! never cross the boundary: they are reported as `MO_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use metaopt::episodes::{densify, parse_letor, serialize_letor, EpisodeError, LetorRecord};
use metaopt::harness::{run_experiment, ExperimentConfig, ExperimentSummary, HarnessError};
use metaopt::objectives::{confidence_interval, ndcg_at_k, RankedList};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Io = 5,
    Runtime = 6,
    Panic = 7,
}

/// Parsed LETOR file, densified to a common feature width.
pub struct MoLetorDataset {
    records: Vec<LetorRecord>,
    width: usize,
}

/// Result of a completed experiment: per-run summaries and aggregates.
pub struct MoRun {
    summary: ExperimentSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(MoStatus, String);

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match &e {
            HarnessError::Validation(_) => MoStatus::Validation,
            HarnessError::Io { .. } => MoStatus::Io,
            HarnessError::Episode(EpisodeError::Parse { .. }) => MoStatus::Parse,
            _ => MoStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: MoStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MoStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MoStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(MoStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MoStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn read_slice<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(MoStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn check_out<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(MoStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(MoStatus::Runtime, "output contains an interior NUL"))
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn mo_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn mo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// NDCG@k of the ordering induced by `scores` (descending; ties by index).
///
/// # Safety
/// `scores` and `grades` must point to `n` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mo_ndcg_at_k(
    scores: *const f64,
    grades: *const u32,
    n: usize,
    max_grade: u32,
    k: usize,
    out: *mut f64,
) -> MoStatus {
    guard(|| {
        check_out(out, "out")?;
        let scores = read_slice(scores, n, "scores")?;
        let grades = read_slice(grades, n, "grades")?;
        let list = RankedList::from_parts(scores, grades, max_grade)
            .map_err(|e| fail(MoStatus::InvalidArgument, e.to_string()))?;
        let v = ndcg_at_k(&list, k).map_err(|e| fail(MoStatus::InvalidArgument, e.to_string()))?;
        *out = v;
        Ok(())
    })
}

/// Mean and normal-approximation CI half-width at `level` (0.90, 0.95 or 0.99).
///
/// # Safety
/// `values` must point to `n` readable doubles; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mo_confidence_interval(
    values: *const f64,
    n: usize,
    level: f64,
    out_mean: *mut f64,
    out_half_width: *mut f64,
) -> MoStatus {
    guard(|| {
        check_out(out_mean, "out_mean")?;
        check_out(out_half_width, "out_half_width")?;
        let values = read_slice(values, n, "values")?;
        let s = confidence_interval(values, level).map_err(|e| fail(MoStatus::InvalidArgument, e.to_string()))?;
        *out_mean = s.mean;
        *out_half_width = s.half_width;
        Ok(())
    })
}

/// Parse LETOR text into a new dataset handle.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mo_letor_parse(text: *const c_char, out: *mut *mut MoLetorDataset) -> MoStatus {
    guard(|| {
        check_out(out, "out")?;
        let text = read_str(text, "text")?;
        let mut records = parse_letor(text).map_err(|e| Failure::from(HarnessError::from(e)))?;
        let width = densify(&mut records);
        *out = Box::into_raw(Box::new(MoLetorDataset { records, width }));
        Ok(())
    })
}

/// Read and parse a LETOR file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mo_letor_parse_file(path: *const c_char, out: *mut *mut MoLetorDataset) -> MoStatus {
    guard(|| {
        check_out(out, "out")?;
        let path = PathBuf::from(read_str(path, "path")?);
        let text = std::fs::read_to_string(&path).map_err(|e| Failure::from(HarnessError::io(&path, e)))?;
        let mut records = parse_letor(&text).map_err(|e| Failure::from(HarnessError::from(e)))?;
        let width = densify(&mut records);
        *out = Box::into_raw(Box::new(MoLetorDataset { records, width }));
        Ok(())
    })
}

/// Number of records (lines) in the dataset.
///
/// # Safety
/// `ds` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mo_letor_len(ds: *const MoLetorDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.records.len())
}

/// Dense feature width (largest feature id seen).
///
/// # Safety
/// `ds` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mo_letor_width(ds: *const MoLetorDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.width)
}

/// Number of distinct query ids.
///
/// # Safety
/// `ds` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mo_letor_num_queries(ds: *const MoLetorDataset) -> usize {
    ds.as_ref().map_or(0, |d| {
        let mut q: Vec<u64> = d.records.iter().map(|r| r.qid).collect();
        q.sort_unstable();
        q.dedup();
        q.len()
    })
}

/// Serialize back to LETOR text. Free the result with `mo_string_free`.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mo_letor_serialize(ds: *const MoLetorDataset, out: *mut *mut c_char) -> MoStatus {
    guard(|| {
        check_out(out, "out")?;
        let ds = ds.as_ref().ok_or_else(|| fail(MoStatus::NullPointer, "dataset is null"))?;
        *out = to_c_string(serialize_letor(&ds.records))?;
        Ok(())
    })
}

/// # Safety
/// `ds` must come from `mo_letor_parse*` and not be used afterwards. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mo_letor_free(ds: *mut MoLetorDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Run a full experiment from a JSON configuration, writing artifacts to
/// `out_dir` (NULL: the configuration's `output_dir`). Relative LETOR paths
/// resolve against the current directory.
///
/// # Safety
/// `config_json` must be a NUL-terminated string, `out_dir` NULL or one, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mo_meta_train_json(
    config_json: *const c_char,
    out_dir: *const c_char,
    out: *mut *mut MoRun,
) -> MoStatus {
    guard(|| {
        check_out(out, "out")?;
        let config = ExperimentConfig::from_json(read_str(config_json, "config_json")?)?;
        let dir = if out_dir.is_null() {
            config.output_dir.clone()
        } else {
            PathBuf::from(read_str(out_dir, "out_dir")?)
        };
        let summary = run_experiment(&config, &dir)?;
        *out = Box::into_raw(Box::new(MoRun { summary }));
        Ok(())
    })
}

/// Number of (combination, seed) runs in the experiment.
///
/// # Safety
/// `run` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn mo_run_count(run: *const MoRun) -> usize {
    run.as_ref().map_or(0, |r| r.summary.runs.len())
}

/// Best heldout accuracy of run `index`.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mo_run_best_heldout(run: *const MoRun, index: usize, out: *mut f64) -> MoStatus {
    guard(|| {
        check_out(out, "out")?;
        let run = run.as_ref().ok_or_else(|| fail(MoStatus::NullPointer, "run is null"))?;
        let r = run
            .summary
            .runs
            .get(index)
            .ok_or_else(|| fail(MoStatus::InvalidArgument, format!("index {index} out of range")))?;
        *out = r.best_heldout;
        Ok(())
    })
}

/// The experiment summary as JSON (same content as summary.json).
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mo_run_summary_json(run: *const MoRun, out: *mut *mut c_char) -> MoStatus {
    guard(|| {
        check_out(out, "out")?;
        let run = run.as_ref().ok_or_else(|| fail(MoStatus::NullPointer, "run is null"))?;
        let text = serde_json::to_string(&run.summary).map_err(|e| fail(MoStatus::Runtime, e.to_string()))?;
        *out = to_c_string(text)?;
        Ok(())
    })
}

/// # Safety
/// `run` must come from `mo_meta_train_json` and not be used afterwards. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mo_run_free(run: *mut MoRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
