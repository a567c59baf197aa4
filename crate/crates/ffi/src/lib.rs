//! C interface to the ALE mini-app.
//!
//! Configurations and finished runs are opaque handles. Every fallible
//! call returns an `int32_t` status (`ALE_OK` or a negative `ALE_ERR_*`);
//! the message of the last failure on the calling thread is available from
//! `ale_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ale_minihydro::driver::{run_ale, write_outputs, DriverError, RunConfig, RunOutcome};

pub const ALE_OK: i32 = 0;
pub const ALE_ERR_NULL: i32 = -1;
pub const ALE_ERR_INVALID_ARGUMENT: i32 = -2;
pub const ALE_ERR_CONFIG: i32 = -3;
pub const ALE_ERR_NUMERICAL: i32 = -4;
pub const ALE_ERR_IO: i32 = -5;
pub const ALE_ERR_BUFFER_TOO_SMALL: i32 = -6;
pub const ALE_ERR_PANIC: i32 = -7;

/// Run configuration; starts from the defaults.
pub struct AleConfig {
    inner: RunConfig,
}

/// Result of a completed run.
pub struct AleRun {
    inner: RunOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(code: i32, msg: impl Into<String>) -> i32 {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    code
}

fn driver_code(e: &DriverError) -> i32 {
    match e {
        DriverError::Config(_) => ALE_ERR_CONFIG,
        DriverError::Numerical { .. } => ALE_ERR_NUMERICAL,
        DriverError::Io(_) | DriverError::Dump(_) => ALE_ERR_IO,
    }
}

fn guard(f: impl FnOnce() -> i32) -> i32 {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(ALE_ERR_PANIC, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, i32> {
    if p.is_null() {
        return Err(fail(ALE_ERR_NULL, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ALE_ERR_INVALID_ARGUMENT, format!("{what} is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ale_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the length the full message needs,
/// including the terminator.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ale_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// New configuration with default values. Free with `ale_config_free`.
#[no_mangle]
pub extern "C" fn ale_config_new() -> *mut AleConfig {
    Box::into_raw(Box::new(AleConfig {
        inner: RunConfig::default(),
    }))
}

/// # Safety
/// `cfg` must be NULL or a handle from `ale_config_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ale_config_free(cfg: *mut AleConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Set one key using the command-line flag name, e.g. `"remap-every"`.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ale_config_set(cfg: *mut AleConfig, key: *const c_char, value: *const c_char) -> i32 {
    guard(|| {
        let Some(cfg) = cfg.as_mut() else {
            return fail(ALE_ERR_NULL, "config handle is NULL");
        };
        let (key, value) = match (str_arg(key, "key"), str_arg(value, "value")) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(c), _) | (_, Err(c)) => return c,
        };
        match cfg.inner.set(key, value) {
            Ok(()) => ALE_OK,
            Err(e) => fail(driver_code(&e), e.to_string()),
        }
    })
}

/// Apply a key=value configuration file.
///
/// # Safety
/// `cfg` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ale_config_load(cfg: *mut AleConfig, path: *const c_char) -> i32 {
    guard(|| {
        let Some(cfg) = cfg.as_mut() else {
            return fail(ALE_ERR_NULL, "config handle is NULL");
        };
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(c) => return c,
        };
        match cfg.inner.apply_file(Path::new(path)) {
            Ok(()) => ALE_OK,
            Err(e) => fail(driver_code(&e), e.to_string()),
        }
    })
}

/// Execute the run. On success `*out` receives a handle to free with
/// `ale_run_free`; on failure it is set to NULL.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ale_run(cfg: *const AleConfig, out: *mut *mut AleRun) -> i32 {
    guard(|| {
        if out.is_null() {
            return fail(ALE_ERR_NULL, "output pointer is NULL");
        }
        *out = std::ptr::null_mut();
        let Some(cfg) = cfg.as_ref() else {
            return fail(ALE_ERR_NULL, "config handle is NULL");
        };
        match run_ale(&cfg.inner) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(AleRun { inner: r }));
                ALE_OK
            }
            Err(e) => fail(driver_code(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `run` must be NULL or a handle from `ale_run` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ale_run_free(run: *mut AleRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Completed cycles, remaps and the final time.
///
/// # Safety
/// `run` must be a live handle; output pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ale_run_summary(
    run: *const AleRun,
    cycles: *mut usize,
    remaps: *mut usize,
    time: *mut f64,
) -> i32 {
    let Some(run) = run.as_ref() else {
        return fail(ALE_ERR_NULL, "run handle is NULL");
    };
    if let Some(c) = cycles.as_mut() {
        *c = run.inner.cycles.len();
    }
    if let Some(r) = remaps.as_mut() {
        *r = run.inner.remaps.len();
    }
    if let Some(t) = time.as_mut() {
        *t = run.inner.state.t;
    }
    ALE_OK
}

/// Relative mass and total-energy drift over the run.
///
/// # Safety
/// `run` must be a live handle; output pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ale_run_conservation(run: *const AleRun, mass_drift: *mut f64, energy_drift: *mut f64) -> i32 {
    let Some(run) = run.as_ref() else {
        return fail(ALE_ERR_NULL, "run handle is NULL");
    };
    if let Some(m) = mass_drift.as_mut() {
        *m = run.inner.conservation.mass_drift;
    }
    if let Some(e) = energy_drift.as_mut() {
        *e = run.inner.conservation.energy_drift;
    }
    ALE_OK
}

/// Copy a final-state field (`"x"`, `"v"`, `"e"`, `"rho_detj"`) into `buf`.
/// `*needed` receives the field length; `ALE_ERR_BUFFER_TOO_SMALL` is
/// returned when `len` is shorter. Pass `buf = NULL` to query the length.
///
/// # Safety
/// `run` must be a live handle, `name` NUL-terminated, `buf` NULL or
/// `len` writable doubles, `needed` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn ale_run_field(
    run: *const AleRun,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> i32 {
    guard(|| {
        let Some(run) = run.as_ref() else {
            return fail(ALE_ERR_NULL, "run handle is NULL");
        };
        let name = match str_arg(name, "name") {
            Ok(n) => n,
            Err(c) => return c,
        };
        let st = &run.inner.state;
        let values: &[f64] = match name {
            "x" => &st.x,
            "v" => &st.v,
            "e" => &st.e,
            "rho_detj" => &st.rho_detj,
            _ => return fail(ALE_ERR_INVALID_ARGUMENT, format!("unknown field `{name}`")),
        };
        if let Some(n) = needed.as_mut() {
            *n = values.len();
        }
        if buf.is_null() {
            return ALE_OK;
        }
        if len < values.len() {
            return fail(
                ALE_ERR_BUFFER_TOO_SMALL,
                format!("field `{name}` needs {} values, buffer holds {len}", values.len()),
            );
        }
        std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        ALE_OK
    })
}

/// Write `cycles.csv`, `remaps.json`, `summary.json` and `state.bin` to `dir`.
///
/// # Safety
/// `run` must be a live handle and `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ale_run_write(run: *const AleRun, dir: *const c_char) -> i32 {
    guard(|| {
        let Some(run) = run.as_ref() else {
            return fail(ALE_ERR_NULL, "run handle is NULL");
        };
        let dir = match str_arg(dir, "dir") {
            Ok(d) => d,
            Err(c) => return c,
        };
        match write_outputs(&run.inner, Path::new(dir)) {
            Ok(()) => ALE_OK,
            Err(e) => fail(driver_code(&e), e.to_string()),
        }
    })
}
