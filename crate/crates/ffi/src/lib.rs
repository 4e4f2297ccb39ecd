//! C ABI over the `twolevel` library.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `_free` function. Every fallible call returns a [`TlStatus`];
//! on failure [`tl_last_error`] describes the error for the calling thread.
//! Strings returned through out-parameters are released with
//! [`tl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use twolevel::data::{BinConfig, Dataset, RawTable};
use twolevel::decision_set::TwoLevelDecisionSet;
use twolevel::oracle::OracleSource;
use twolevel::pipeline::{self, ExplainRequest, Explanation};
use twolevel::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Data = 4,
    Config = 5,
    Search = 6,
    Json = 7,
    Oracle = 8,
    Panic = 9,
}

/// A labeled dataset.
pub struct TlDataset {
    inner: Dataset,
}

/// A fitted explanation with its decision set.
pub struct TlExplanation {
    explanation: Explanation,
    set: TwoLevelDecisionSet,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TlStatus {
    match e {
        Error::Io(_) => TlStatus::Io,
        Error::Config(_) => TlStatus::Config,
        Error::EmptyCandidates(_) | Error::SearchTooLarge(_) => TlStatus::Search,
        Error::Json(_) => TlStatus::Json,
        Error::OracleUnavailable(_) | Error::Protocol { .. } => TlStatus::Oracle,
        _ => TlStatus::Data,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TlStatus, String)>) -> TlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TlStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (TlStatus, String) {
    (status_of(&e), e.to_string())
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn opt_str<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, (TlStatus, String)> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| (TlStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

/// # Safety
/// `p` is a valid NUL-terminated string.
unsafe fn req_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (TlStatus, String)> {
    opt_str(p, name)?.ok_or_else(|| (TlStatus::NullArgument, format!("{name} is null")))
}

fn out_string(s: String, out: *mut *mut c_char) -> Result<(), (TlStatus, String)> {
    let c = CString::new(s).map_err(|_| (TlStatus::Data, "string contains NUL".to_string()))?;
    // SAFETY: callers check `out` is non-null before calling.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load a CSV whose `label_col` holds the black-box labels.
///
/// # Safety
/// String arguments are valid NUL-terminated strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tl_dataset_load_csv(
    path: *const c_char,
    label_col: *const c_char,
    out: *mut *mut TlDataset,
) -> TlStatus {
    guard(|| {
        if out.is_null() {
            return Err((TlStatus::NullArgument, "out is null".into()));
        }
        *out = ptr::null_mut();
        let path = req_str(path, "path")?;
        let label = req_str(label_col, "label_col")?;
        let table = RawTable::from_path(path).map_err(lib_err)?;
        let ds = pipeline::prepare_dataset(&table, Some(label), &OracleSource::column(label), &BinConfig::default())
            .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TlDataset { inner: ds }));
        Ok(())
    })
}

/// Same as [`tl_dataset_load_csv`] with the CSV text in memory.
///
/// # Safety
/// String arguments are valid NUL-terminated strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tl_dataset_from_csv_text(
    csv: *const c_char,
    label_col: *const c_char,
    out: *mut *mut TlDataset,
) -> TlStatus {
    guard(|| {
        if out.is_null() {
            return Err((TlStatus::NullArgument, "out is null".into()));
        }
        *out = ptr::null_mut();
        let text = req_str(csv, "csv")?;
        let label = req_str(label_col, "label_col")?;
        let table = RawTable::from_reader(text.as_bytes()).map_err(lib_err)?;
        let ds = pipeline::prepare_dataset(&table, Some(label), &OracleSource::column(label), &BinConfig::default())
            .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TlDataset { inner: ds }));
        Ok(())
    })
}

/// Number of instances; 0 for a null handle.
///
/// # Safety
/// `ds` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_dataset_len(ds: *const TlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.n())
}

/// # Safety
/// `ds` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tl_dataset_free(ds: *mut TlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fit an explanation. `request_json` may be null for the defaults.
///
/// # Safety
/// `ds` is a live handle; `request_json` is null or a valid string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tl_explain(
    ds: *const TlDataset,
    request_json: *const c_char,
    out: *mut *mut TlExplanation,
) -> TlStatus {
    guard(|| {
        if out.is_null() {
            return Err((TlStatus::NullArgument, "out is null".into()));
        }
        *out = ptr::null_mut();
        let ds = ds.as_ref().ok_or((TlStatus::NullArgument, "dataset is null".to_string()))?;
        let req: ExplainRequest = match opt_str(request_json, "request_json")? {
            Some(s) => serde_json::from_str(s).map_err(|e| (TlStatus::Json, e.to_string()))?,
            None => ExplainRequest::default(),
        };
        let explanation = pipeline::explain(&ds.inner, &req).map_err(lib_err)?;
        let set = explanation.decision_set().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TlExplanation { explanation, set }));
        Ok(())
    })
}

/// Parse explanation JSON as written by [`tl_explanation_to_json`] or the CLI.
///
/// # Safety
/// `json` is a valid string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tl_explanation_from_json(
    json: *const c_char,
    out: *mut *mut TlExplanation,
) -> TlStatus {
    guard(|| {
        if out.is_null() {
            return Err((TlStatus::NullArgument, "out is null".into()));
        }
        *out = ptr::null_mut();
        let text = req_str(json, "json")?;
        let explanation = Explanation::from_json(text).map_err(lib_err)?;
        let set = explanation.decision_set().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TlExplanation { explanation, set }));
        Ok(())
    })
}

/// # Safety
/// `exp` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tl_explanation_to_json(exp: *const TlExplanation, out: *mut *mut c_char) -> TlStatus {
    guard(|| {
        if out.is_null() {
            return Err((TlStatus::NullArgument, "out is null".into()));
        }
        *out = ptr::null_mut();
        let exp = exp.as_ref().ok_or((TlStatus::NullArgument, "explanation is null".to_string()))?;
        out_string(exp.explanation.to_json().map_err(lib_err)?, out)
    })
}

/// Number of rules; 0 for a null handle.
///
/// # Safety
/// `exp` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_explanation_rule_count(exp: *const TlExplanation) -> usize {
    exp.as_ref().map_or(0, |e| e.set.len())
}

/// Agreement rate on the fitted data; NaN for a null handle.
///
/// # Safety
/// `exp` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_explanation_agreement(exp: *const TlExplanation) -> f64 {
    exp.as_ref().map_or(f64::NAN, |e| e.explanation.metrics.agreement_rate)
}

/// Predict an instance given as a JSON object. Writes
/// `{"label":..,"provenance":..,"rule":..,"fired_rules":[..]}` to `out`.
///
/// # Safety
/// `exp` is a live handle; `instance_json` is a valid string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tl_explanation_predict(
    exp: *const TlExplanation,
    instance_json: *const c_char,
    out: *mut *mut c_char,
) -> TlStatus {
    guard(|| {
        if out.is_null() {
            return Err((TlStatus::NullArgument, "out is null".into()));
        }
        *out = ptr::null_mut();
        let exp = exp.as_ref().ok_or((TlStatus::NullArgument, "explanation is null".to_string()))?;
        let text = req_str(instance_json, "instance_json")?;
        let inst: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| (TlStatus::Json, e.to_string()))?;
        let p = pipeline::predict_instance(&exp.set, &inst).map_err(lib_err)?;
        out_string(serde_json::to_string(&p).map_err(|e| (TlStatus::Json, e.to_string()))?, out)
    })
}

/// # Safety
/// `exp` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tl_explanation_free(exp: *mut TlExplanation) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` is null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
