//! C ABI over the `znn` crate.
//!
//! Runs are configured with the same `key = value` text the CLI reads from
//! config files. Handles are opaque and must be released with their `_free`
//! function. Every fallible call returns a [`ZnnStatus`]; on failure the
//! message is available from [`znn_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use znn::fdforms::{self, verify_order};
use znn::harness::{self, HarnessError, ResidualTrace, RunConfig};
use znn::ZnnRun;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZnnStatus {
    Ok = 0,
    /// I/O or plotting failure.
    Io = 1,
    InvalidConfig = 2,
    /// Singular or rank-deficient matrix, or a diverged iterate.
    Numerical = 3,
    NullPointer = 4,
    OutOfRange = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A completed run's residual trace.
pub struct ZnnTrace {
    inner: ResidualTrace,
}

/// A stepper advanced one sample at a time.
pub struct ZnnStepper {
    inner: ZnnRun,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ZnnStatus, msg: impl Into<String>) -> ZnnStatus {
    set_error(msg.into());
    status
}

fn from_harness(e: HarnessError) -> ZnnStatus {
    let status = match e.exit_code() {
        2 => ZnnStatus::InvalidConfig,
        3 => ZnnStatus::Numerical,
        _ => ZnnStatus::Io,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> ZnnStatus) -> ZnnStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(ZnnStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, ZnnStatus> {
    if p.is_null() {
        return Err(fail(ZnnStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ZnnStatus::InvalidConfig, "string is not UTF-8"))
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn znn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Runs the configuration in `config` (`key = value` lines) to completion.
///
/// # Safety
/// `config` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn znn_trace_run(
    config: *const c_char,
    out: *mut *mut ZnnTrace,
) -> ZnnStatus {
    guard(|| {
        if out.is_null() {
            return fail(ZnnStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match read_str(config) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let trace = RunConfig::parse(text).and_then(|c| harness::run(&c));
        match trace {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(ZnnTrace { inner }));
                ZnnStatus::Ok
            }
            Err(e) => from_harness(e),
        }
    })
}

/// Number of rows in the trace; 0 for null.
///
/// # Safety
/// `trace` must be null or a live handle from [`znn_trace_run`].
#[no_mangle]
pub unsafe extern "C" fn znn_trace_len(trace: *const ZnnTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.rows.len())
}

/// Copies row `index` into `k`, `t` and `residual`. Any output may be null.
///
/// # Safety
/// `trace` must be a live handle; non-null outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn znn_trace_row(
    trace: *const ZnnTrace,
    index: usize,
    k: *mut usize,
    t: *mut f64,
    residual: *mut f64,
) -> ZnnStatus {
    let Some(trace) = trace.as_ref() else {
        return fail(ZnnStatus::NullPointer, "null trace");
    };
    let Some(row) = trace.inner.rows.get(index) else {
        return fail(
            ZnnStatus::OutOfRange,
            format!("row {index} of {}", trace.inner.rows.len()),
        );
    };
    if !k.is_null() {
        *k = row.k;
    }
    if !t.is_null() {
        *t = row.t;
    }
    if !residual.is_null() {
        *residual = row.residual;
    }
    ZnnStatus::Ok
}

/// Median residual over the final fifth of the trace; NaN for null.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn znn_trace_steady_state(trace: *const ZnnTrace) -> f64 {
    trace
        .as_ref()
        .map_or(f64::NAN, |t| t.inner.steady_state_residual())
}

/// Writes `PREFIX.csv` and `PREFIX.cfg`, plus the plots selected by the run's
/// `emit` setting.
///
/// # Safety
/// `trace` must be a live handle and `prefix` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn znn_trace_write(
    trace: *const ZnnTrace,
    prefix: *const c_char,
) -> ZnnStatus {
    guard(|| {
        let Some(trace) = trace.as_ref() else {
            return fail(ZnnStatus::NullPointer, "null trace");
        };
        let prefix = match read_str(prefix) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let mut inner = trace.inner.clone();
        if !inner.config.emit.contains(&harness::EmitFormat::Csv) {
            inner.config.emit.push(harness::EmitFormat::Csv);
        }
        match harness::emit(&inner, Path::new(prefix)) {
            Ok(_) => ZnnStatus::Ok,
            Err(e) => from_harness(e),
        }
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn znn_trace_free(trace: *mut ZnnTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Builds a stepper from `config` and seeds its warm-up history. `k_out`,
/// if non-null, receives the index of the newest seeded iterate.
///
/// # Safety
/// `config` must be a nul-terminated string, `out` valid, `k_out` null or valid.
#[no_mangle]
pub unsafe extern "C" fn znn_stepper_new(
    config: *const c_char,
    out: *mut *mut ZnnStepper,
    k_out: *mut usize,
) -> ZnnStatus {
    guard(|| {
        if out.is_null() {
            return fail(ZnnStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match read_str(config) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let mut run = match RunConfig::parse(text).and_then(|c| c.build_run()) {
            Ok(r) => r,
            Err(e) => return from_harness(e),
        };
        if let Err(e) = run.seed() {
            return from_harness(HarnessError::Model { step: 0, source: e });
        }
        if !k_out.is_null() {
            *k_out = run.k();
        }
        *out = Box::into_raw(Box::new(ZnnStepper { inner: run }));
        ZnnStatus::Ok
    })
}

/// Advances one step; `residual`, if non-null, receives the new iterate's residual.
///
/// # Safety
/// `stepper` must be a live handle; `residual` null or valid.
#[no_mangle]
pub unsafe extern "C" fn znn_stepper_step(
    stepper: *mut ZnnStepper,
    residual: *mut f64,
) -> ZnnStatus {
    guard(|| {
        let Some(s) = stepper.as_mut() else {
            return fail(ZnnStatus::NullPointer, "null stepper");
        };
        let step = s.inner.k() + 1;
        if let Err(e) = s.inner.step() {
            return from_harness(HarnessError::Model { step, source: e });
        }
        if !residual.is_null() {
            let y = s.inner.current().expect("just stepped");
            *residual = s.inner.residual(y, s.inner.time_of(s.inner.k()));
        }
        ZnnStatus::Ok
    })
}

/// Current step index; 0 for null.
///
/// # Safety
/// `stepper` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn znn_stepper_k(stepper: *const ZnnStepper) -> usize {
    stepper.as_ref().map_or(0, |s| s.inner.k())
}

/// Copies the current iterate row-major into `buf`. `rows` and `cols`
/// always receive the shape, so a call with `capacity = 0` queries it.
///
/// # Safety
/// `stepper` must be a live handle; `buf` must hold `capacity` doubles;
/// `rows` and `cols` must be valid.
#[no_mangle]
pub unsafe extern "C" fn znn_stepper_iterate(
    stepper: *const ZnnStepper,
    buf: *mut f64,
    capacity: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> ZnnStatus {
    let Some(s) = stepper.as_ref() else {
        return fail(ZnnStatus::NullPointer, "null stepper");
    };
    if rows.is_null() || cols.is_null() {
        return fail(ZnnStatus::NullPointer, "null shape output");
    }
    let Some(y) = s.inner.current() else {
        return fail(ZnnStatus::OutOfRange, "no iterate yet");
    };
    (*rows, *cols) = y.shape();
    let data = y.as_slice();
    if capacity < data.len() {
        return fail(
            ZnnStatus::BufferTooSmall,
            format!("need {} doubles, got {capacity}", data.len()),
        );
    }
    if buf.is_null() {
        return fail(ZnnStatus::NullPointer, "null buffer");
    }
    ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
    ZnnStatus::Ok
}

/// # Safety
/// `stepper` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn znn_stepper_free(stepper: *mut ZnnStepper) {
    if !stepper.is_null() {
        drop(Box::from_raw(stepper));
    }
}

/// Truncation order of a registered formula, computed exactly.
///
/// # Safety
/// `name` must be a nul-terminated string and `order` valid.
#[no_mangle]
pub unsafe extern "C" fn znn_formula_order(name: *const c_char, order: *mut u32) -> ZnnStatus {
    guard(|| {
        if order.is_null() {
            return fail(ZnnStatus::NullPointer, "null output pointer");
        }
        let name = match read_str(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match fdforms::lookup(name).and_then(|f| verify_order(&f)) {
            Ok(p) => {
                *order = p;
                ZnnStatus::Ok
            }
            Err(e) => fail(ZnnStatus::InvalidConfig, e.to_string()),
        }
    })
}

/// Roots of the characteristic polynomial of a one-step-ahead formula's
/// update. Writes up to `capacity` roots (real and imaginary parts) and the
/// 0-stability verdict; `count` receives the number of distinct roots.
///
/// # Safety
/// `name` must be a nul-terminated string; `re` and `im` must hold
/// `capacity` doubles; `count` and `zero_stable` must be valid.
#[no_mangle]
pub unsafe extern "C" fn znn_stability_roots(
    name: *const c_char,
    re: *mut f64,
    im: *mut f64,
    capacity: usize,
    count: *mut usize,
    zero_stable: *mut bool,
) -> ZnnStatus {
    guard(|| {
        if count.is_null() || zero_stable.is_null() {
            return fail(ZnnStatus::NullPointer, "null output pointer");
        }
        let name = match read_str(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let report = match harness::stability_report(name) {
            Ok(r) => r,
            Err(e) => return from_harness(e),
        };
        *count = report.roots.len();
        *zero_stable = report.zero_stable;
        if capacity < report.roots.len() {
            return fail(
                ZnnStatus::BufferTooSmall,
                format!("need {} roots, got {capacity}", report.roots.len()),
            );
        }
        if re.is_null() || im.is_null() {
            return fail(ZnnStatus::NullPointer, "null root buffer");
        }
        for (i, r) in report.roots.iter().enumerate() {
            *re.add(i) = r.value.re;
            *im.add(i) = r.value.im;
        }
        ZnnStatus::Ok
    })
}
