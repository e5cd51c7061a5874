//! C ABI over the estimation engine.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every call returns a [`GattStatus`]; on
//! failure [`gatt_last_error`] describes the error for the calling thread.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gatt::config::TruthConfig;
use gatt::estimators::{estimate, EstimateResult};
use gatt::simlab::dgp::{simulate, DgpSpec};
use gatt::simlab::oracle::compute_true_gatt;
use gatt::{GattError, LongitudinalFrame, OutcomeFamily, TaskSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GattStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfiguration = 3,
    InvalidData = 4,
    EmptyConditioningStratum = 5,
    ContinuousTreatment = 6,
    NumericalFailure = 7,
    Io = 8,
    OutOfRange = 9,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GattFamily {
    Binomial = 0,
    Gaussian = 1,
}

/// A longitudinal dataset.
pub struct GattFrame(LongitudinalFrame);

/// Estimates from one call to [`gatt_estimate`], one entry per estimator.
pub struct GattResults(Vec<EstimateResult>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &GattError) -> GattStatus {
    match e {
        GattError::Config(_) | GattError::Json(_) => GattStatus::InvalidConfiguration,
        GattError::InvalidData(_) | GattError::Csv(_) => GattStatus::InvalidData,
        GattError::EmptyConditioningStratum | GattError::EmptyRegressionSubset { .. } => {
            GattStatus::EmptyConditioningStratum
        }
        GattError::ContinuousTreatment { .. } => GattStatus::ContinuousTreatment,
        GattError::Learner(_) | GattError::NonFiniteLoss { .. } | GattError::FluctuationDiverged { .. } => {
            GattStatus::NumericalFailure
        }
        GattError::Io(_) => GattStatus::Io,
    }
}

struct Failure(GattStatus, String);

impl From<GattError> for Failure {
    fn from(e: GattError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any error or panic for [`gatt_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GattStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GattStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            GattStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(GattStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(GattStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(GattStatus::NullArgument, format!("{name} is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(GattStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn gatt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gatt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a CSV with `L<t>_<name>`, `A<t>` and `Y` columns.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gatt_frame_from_csv(path: *const c_char, family: GattFamily, out: *mut *mut GattFrame) -> GattStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let family = match family {
            GattFamily::Binomial => OutcomeFamily::Binomial,
            GattFamily::Gaussian => OutcomeFamily::Gaussian,
        };
        let file = File::open(path).map_err(GattError::from)?;
        let frame = LongitudinalFrame::from_csv(BufReader::new(file), family)?;
        *out = Box::into_raw(Box::new(GattFrame(frame)));
        Ok(())
    })
}

/// Draws `n` units from a built-in law given as JSON, e.g. `{"kind":"sim1"}`.
///
/// # Safety
/// `dgp_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gatt_frame_simulate(dgp_json: *const c_char, n: usize, seed: u64, out: *mut *mut GattFrame) -> GattStatus {
    guard(|| {
        out_arg(out, "out")?;
        let dgp: DgpSpec = serde_json::from_str(str_arg(dgp_json, "dgp_json")?).map_err(GattError::from)?;
        dgp.validate()?;
        let frame = simulate(dgp.model().as_ref(), n, seed)?;
        *out = Box::into_raw(Box::new(GattFrame(frame)));
        Ok(())
    })
}

/// # Safety
/// `frame` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn gatt_frame_n(frame: *const GattFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.0.n())
}

/// # Safety
/// `frame` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn gatt_frame_tau(frame: *const GattFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.0.tau())
}

/// # Safety
/// `frame` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn gatt_frame_free(frame: *mut GattFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// Runs the estimators of a task given as JSON (policy and conditioning
/// listed per time point).
///
/// # Safety
/// `frame` must come from this library, `task_json` must be a NUL-terminated
/// string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gatt_estimate(frame: *const GattFrame, task_json: *const c_char, out: *mut *mut GattResults) -> GattStatus {
    guard(|| {
        out_arg(out, "out")?;
        let frame = ref_arg(frame, "frame")?;
        let task: TaskSpec = serde_json::from_str(str_arg(task_json, "task_json")?).map_err(GattError::from)?;
        let results = estimate(&frame.0, &task)?;
        *out = Box::into_raw(Box::new(GattResults(results)));
        Ok(())
    })
}

/// # Safety
/// `results` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn gatt_results_len(results: *const GattResults) -> usize {
    results.as_ref().map_or(0, |r| r.0.len())
}

/// Point estimate, standard error (NaN when the estimator has none) and 95%
/// interval bounds (NaN likewise) of entry `index`.
///
/// # Safety
/// `results` must come from this library; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gatt_results_get(
    results: *const GattResults,
    index: usize,
    theta: *mut f64,
    se: *mut f64,
    ci_lower: *mut f64,
    ci_upper: *mut f64,
) -> GattStatus {
    guard(|| {
        let results = ref_arg(results, "results")?;
        for (p, name) in [(theta, "theta"), (se, "se"), (ci_lower, "ci_lower"), (ci_upper, "ci_upper")] {
            out_arg(p, name)?;
        }
        let r = results
            .0
            .get(index)
            .ok_or_else(|| Failure(GattStatus::OutOfRange, format!("index {index} out of range")))?;
        *theta = r.theta_hat;
        *se = r.se.unwrap_or(f64::NAN);
        let [lo, hi] = r.ci.unwrap_or([f64::NAN; 2]);
        *ci_lower = lo;
        *ci_upper = hi;
        Ok(())
    })
}

/// All results as a JSON array. Release the string with [`gatt_string_free`].
///
/// # Safety
/// `results` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gatt_results_json(results: *const GattResults, out: *mut *mut c_char) -> GattStatus {
    guard(|| {
        out_arg(out, "out")?;
        let results = ref_arg(results, "results")?;
        let json = serde_json::to_string(&results.0).map_err(GattError::from)?;
        *out = CString::new(json).map_err(|e| Failure(GattStatus::InvalidData, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `results` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn gatt_results_free(results: *mut GattResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn gatt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Monte-Carlo truth for a truth config given as JSON.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gatt_true_gatt(config_json: *const c_char, theta: *mut f64, mc_se: *mut f64) -> GattStatus {
    guard(|| {
        out_arg(theta, "theta")?;
        out_arg(mc_se, "mc_se")?;
        let cfg: TruthConfig = serde_json::from_str(str_arg(config_json, "config_json")?).map_err(GattError::from)?;
        let (policy, conditioning) = cfg.resolve()?;
        let t = compute_true_gatt(cfg.dgp.model().as_ref(), &policy, &conditioning, cfg.draws, cfg.seed)?;
        *theta = t.theta_true;
        *mc_se = t.mc_se;
        Ok(())
    })
}
