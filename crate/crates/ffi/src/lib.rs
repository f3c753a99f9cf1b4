//! C ABI for the `dtomo` solver.
//!
//! Instances and results are opaque heap handles created by `dt_*` calls
//! and released with the matching `*_free` function. Every fallible call
//! returns a [`DtStatus`]; on failure a human-readable message is kept per
//! thread and can be read with [`dt_last_error_message`]. Panics never
//! cross the boundary: they are caught and reported as
//! [`DtStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dtomo::instance::{generate_random_instance, load_instance, save_instance, GeneratorConfig};
use dtomo::pipeline::{solve, Method, SolveConfig, SolveResult, SolveStatus};
use dtomo::report::ResultRecord;
use dtomo::{Direction, Error, Labeling, TomographyInstance};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    Io = 2,
    Parse = 3,
    Validation = 4,
    InvalidArgument = 5,
    /// The caller's buffer is too small; the required length was written.
    BufferTooSmall = 6,
    /// The requested value does not exist (e.g. no primal labeling).
    NotAvailable = 7,
    /// An internal panic was caught.
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtMethod {
    Ctg = 0,
    Std = 1,
    CtgBb = 2,
    StdBb = 3,
}

impl From<DtMethod> for Method {
    fn from(m: DtMethod) -> Self {
        match m {
            DtMethod::Ctg => Method::Ctg,
            DtMethod::Std => Method::Std,
            DtMethod::CtgBb => Method::CtgBb,
            DtMethod::StdBb => Method::StdBb,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtSolveStatus {
    Optimal = 0,
    Gap = 1,
    BoundOnly = 2,
    Infeasible = 3,
    Timeout = 4,
}

impl From<SolveStatus> for DtSolveStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => DtSolveStatus::Optimal,
            SolveStatus::Gap => DtSolveStatus::Gap,
            SolveStatus::BoundOnly => DtSolveStatus::BoundOnly,
            SolveStatus::Infeasible => DtSolveStatus::Infeasible,
            SolveStatus::Timeout => DtSolveStatus::Timeout,
        }
    }
}

/// Solver options; initialize with [`dt_solve_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtSolveOptions {
    pub max_iters: u32,
    /// Wall-clock limit in seconds; `<= 0` means none.
    pub time_limit_seconds: f64,
    /// Non-zero for sequential, bit-reproducible runs.
    pub deterministic: i32,
    /// Non-zero to keep iterating after the gap is closed.
    pub no_early_stop: i32,
}

/// Opaque problem instance.
pub struct DtInstance {
    inner: TomographyInstance,
}

/// Opaque solve result.
pub struct DtResult {
    inner: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> DtStatus {
    match err {
        Error::Io { .. } => DtStatus::Io,
        Error::Parse { .. } => DtStatus::Parse,
        Error::Validation { .. } => DtStatus::Validation,
        Error::InvalidArgument(_) => DtStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (DtStatus, String)>) -> DtStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DtStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("internal panic: {msg}"));
            DtStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (DtStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DtStatus, String) {
    (DtStatus::NullPointer, format!("`{what}` must not be null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DtStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DtStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

fn into_handle<T>(value: T, out: *mut *mut T) -> Result<(), (DtStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    // SAFETY: `out` is non-null and points to caller-owned storage.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next `dt_*` call on the same thread.
#[no_mangle]
pub extern "C" fn dt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads an instance file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dt_instance_load(path: *const c_char, out: *mut *mut DtInstance) -> DtStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let inner = load_instance(path).map_err(lib_err)?;
        into_handle(DtInstance { inner }, out)
    })
}

/// Parses an instance from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dt_instance_from_json(json: *const c_char, out: *mut *mut DtInstance) -> DtStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let inner = TomographyInstance::from_json(text).map_err(lib_err)?;
        into_handle(DtInstance { inner }, out)
    })
}

/// Generates a random instance. `directions` is a set of the letters
/// `h`, `v`, `d`, `u`. When `ground_truth` is non-null it receives the
/// `width * height` ground-truth labels (row-major).
///
/// # Safety
/// `directions` must be a NUL-terminated string, `out` a valid pointer and
/// `ground_truth` null or valid for `width * height` writes.
#[no_mangle]
pub unsafe extern "C" fn dt_instance_generate(
    seed: u64,
    width: u32,
    height: u32,
    k: u32,
    directions: *const c_char,
    smoothing: u32,
    ground_truth: *mut u32,
    out: *mut *mut DtInstance,
) -> DtStatus {
    guard(|| {
        let dirs = Direction::parse_set(c_str(directions, "directions")?).map_err(lib_err)?;
        let mut cfg = GeneratorConfig::new(seed, width as usize, height as usize, k as usize, dirs);
        cfg.smoothing = smoothing as usize;
        let (inner, truth) = generate_random_instance(&cfg).map_err(lib_err)?;
        if !ground_truth.is_null() {
            for (i, &x) in truth.iter().enumerate() {
                *ground_truth.add(i) = x as u32;
            }
        }
        into_handle(DtInstance { inner }, out)
    })
}

/// Writes an instance file.
///
/// # Safety
/// `instance` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dt_instance_save(instance: *const DtInstance, path: *const c_char) -> DtStatus {
    guard(|| {
        let inst = instance.as_ref().ok_or_else(|| null("instance"))?;
        let path = c_str(path, "path")?;
        save_instance(&inst.inner, path).map_err(lib_err)
    })
}

/// Releases an instance; null is ignored.
///
/// # Safety
/// `instance` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dt_instance_free(instance: *mut DtInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Grid width, or 0 for a null handle.
///
/// # Safety
/// `instance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_instance_width(instance: *const DtInstance) -> u32 {
    instance.as_ref().map_or(0, |i| i.inner.width() as u32)
}

/// Grid height, or 0 for a null handle.
///
/// # Safety
/// `instance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_instance_height(instance: *const DtInstance) -> u32 {
    instance.as_ref().map_or(0, |i| i.inner.height() as u32)
}

/// Number of labels, or 0 for a null handle.
///
/// # Safety
/// `instance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_instance_k(instance: *const DtInstance) -> u32 {
    instance.as_ref().map_or(0, |i| i.inner.k() as u32)
}

/// Number of rays, or 0 for a null handle.
///
/// # Safety
/// `instance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_instance_num_rays(instance: *const DtInstance) -> u32 {
    instance.as_ref().map_or(0, |i| i.inner.rays().len() as u32)
}

/// Energy of a labeling and whether it meets every ray sum.
///
/// # Safety
/// `instance` must be a live handle, `labels` valid for `len` reads and
/// `energy`, `feasible` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dt_instance_evaluate(
    instance: *const DtInstance,
    labels: *const u32,
    len: usize,
    energy: *mut f64,
    feasible: *mut i32,
) -> DtStatus {
    guard(|| {
        let inst = instance.as_ref().ok_or_else(|| null("instance"))?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        if energy.is_null() || feasible.is_null() {
            return Err(null("energy/feasible"));
        }
        let labeling = Labeling(std::slice::from_raw_parts(labels, len).iter().map(|&x| x as usize).collect());
        inst.inner.check_labeling(&labeling).map_err(lib_err)?;
        *energy = inst.inner.evaluate_energy(&labeling);
        *feasible = i32::from(inst.inner.is_feasible(&labeling));
        Ok(())
    })
}

/// Fills `options` with the defaults.
///
/// # Safety
/// `options` must be null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dt_solve_options_default(options: *mut DtSolveOptions) {
    if let Some(o) = options.as_mut() {
        let d = SolveConfig::default();
        *o = DtSolveOptions {
            max_iters: d.ascent.max_iters as u32,
            time_limit_seconds: 0.0,
            deterministic: 0,
            no_early_stop: 0,
        };
    }
}

/// Solves an instance. `options` may be null for the defaults. A timeout
/// still yields a result (status `DT_SOLVE_STATUS_TIMEOUT`).
///
/// # Safety
/// `instance` must be a live handle, `options` null or valid, and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dt_solve(
    instance: *const DtInstance,
    method: DtMethod,
    options: *const DtSolveOptions,
    out: *mut *mut DtResult,
) -> DtStatus {
    guard(|| {
        let inst = instance.as_ref().ok_or_else(|| null("instance"))?;
        let mut config = SolveConfig::default();
        if let Some(o) = options.as_ref() {
            config.ascent.max_iters = o.max_iters as usize;
            config.time_limit_seconds = (o.time_limit_seconds > 0.0).then_some(o.time_limit_seconds);
            config.deterministic = o.deterministic != 0;
            config.ascent.stop_when_certified = o.no_early_stop == 0;
        }
        let inner = solve(&inst.inner, method.into(), &config);
        into_handle(DtResult { inner }, out)
    })
}

/// Releases a result; null is ignored.
///
/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dt_result_free(result: *mut DtResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Best dual lower bound (`+inf` for infeasible instances, NaN for null).
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_result_lower_bound(result: *const DtResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.lower_bound)
}

/// Energy of the best feasible labeling.
///
/// # Safety
/// `result` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dt_result_primal_value(result: *const DtResult, value: *mut f64) -> DtStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let out = value.as_mut().ok_or_else(|| null("value"))?;
        match r.inner.primal_value {
            Some(v) => {
                *out = v;
                Ok(())
            }
            None => Err((DtStatus::NotAvailable, "no feasible labeling was found".into())),
        }
    })
}

/// 1 when the primal value is proven optimal, else 0.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_result_certified(result: *const DtResult) -> i32 {
    result.as_ref().map_or(0, |r| i32::from(r.inner.certified))
}

/// Outcome class; `DT_SOLVE_STATUS_BOUND_ONLY` for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_result_status(result: *const DtResult) -> DtSolveStatus {
    result.as_ref().map_or(DtSolveStatus::BoundOnly, |r| r.inner.status.into())
}

/// Ascent iterations (root iterations for branch and bound).
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_result_iterations(result: *const DtResult) -> u32 {
    result.as_ref().map_or(0, |r| r.inner.iterations as u32)
}

/// Copies the best labeling into `buffer`. `written` always receives the
/// labeling length; with a too-small buffer nothing is copied and
/// `DT_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `result` must be a live handle, `buffer` null or valid for `len` writes
/// and `written` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dt_result_labeling(
    result: *const DtResult,
    buffer: *mut u32,
    len: usize,
    written: *mut usize,
) -> DtStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let written = written.as_mut().ok_or_else(|| null("written"))?;
        let labels = r
            .inner
            .labeling
            .as_ref()
            .ok_or_else(|| (DtStatus::NotAvailable, "no feasible labeling was found".to_string()))?;
        *written = labels.len();
        if buffer.is_null() || len < labels.len() {
            return Err((DtStatus::BufferTooSmall, format!("labeling needs {} entries", labels.len())));
        }
        for (i, &x) in labels.iter().enumerate() {
            *buffer.add(i) = x as u32;
        }
        Ok(())
    })
}

/// The result record as JSON; release with [`dt_string_free`]. Null on
/// failure.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_result_to_json(result: *const DtResult) -> *mut c_char {
    let mut out = ptr::null_mut();
    let status = guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let text = ResultRecord::new(&r.inner, None).to_json();
        out = CString::new(text)
            .map_err(|_| (DtStatus::Panic, "record contains NUL".to_string()))?
            .into_raw();
        Ok(())
    });
    if status == DtStatus::Ok {
        out
    } else {
        ptr::null_mut()
    }
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
