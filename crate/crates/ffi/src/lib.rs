//! C ABI over `ssmk`.
//!
//! Map descriptions live behind the opaque [`SsmkSpec`] handle. Every entry
//! point returns an [`SsmkStatus`]; on failure the message is kept per thread
//! and read back with [`ssmk_last_error_message`]. Strings handed out by the
//! library are released with [`ssmk_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ssmk::dimension::{self, k1_metadata, trace_pairing, Tower};
use ssmk::{Builtin, MapSpec, Site, DEFAULT_SIZE_GUARD};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    UnknownBuiltin = 3,
    InvalidSpec = 4,
    UnknownPoint = 5,
    Computation = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmkMapKind {
    Inclusion = 0,
    Beta = 1,
}

/// Opaque handle to a validated map description.
pub struct SsmkSpec {
    spec: MapSpec,
    size_guard: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SsmkStatus, String);

impl<E: std::fmt::Display> From<(SsmkStatus, E)> for Failure {
    fn from((status, e): (SsmkStatus, E)) -> Self {
        Failure(status, e.to_string())
    }
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("interior nuls replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn guarded(body: impl FnOnce() -> Result<(), Failure>) -> SsmkStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SsmkStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("panic: {message}"));
            SsmkStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure(SsmkStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(s).to_str().map_err(|e| (SsmkStatus::InvalidUtf8, e).into())
}

unsafe fn handle<'a>(spec: *const SsmkSpec) -> Result<&'a SsmkSpec, Failure> {
    spec.as_ref().ok_or_else(|| Failure(SsmkStatus::NullPointer, "null spec handle".into()))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(SsmkStatus::NullPointer, "null output pointer".into()));
    }
    out.write(value);
    Ok(())
}

fn computation<E: std::fmt::Display>(e: E) -> Failure {
    (SsmkStatus::Computation, e).into()
}

unsafe fn write_json(out: *mut *mut c_char, value: serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string(&value).map_err(computation)?;
    let text = CString::new(text).map_err(computation)?;
    write_out(out, text.into_raw())
}

/// Creates a handle for a built-in map (`tent`, `gasket`, `fullshift2`).
///
/// # Safety
/// `name` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssmk_spec_builtin(name: *const c_char, out: *mut *mut SsmkSpec) -> SsmkStatus {
    guarded(|| {
        let name = read_str(name)?;
        let builtin =
            Builtin::from_name(name).ok_or_else(|| Failure(SsmkStatus::UnknownBuiltin, format!("unknown built-in map `{name}`")))?;
        let spec = Box::new(SsmkSpec { spec: builtin.spec(), size_guard: DEFAULT_SIZE_GUARD });
        write_out(out, Box::into_raw(spec))
    })
}

/// Parses and validates a TOML map description.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssmk_spec_parse(text: *const c_char, out: *mut *mut SsmkSpec) -> SsmkStatus {
    guarded(|| {
        let text = read_str(text)?;
        let spec = MapSpec::parse(text).map_err(|errors| {
            let lines: Vec<String> = errors.iter().map(ToString::to_string).collect();
            Failure(SsmkStatus::InvalidSpec, lines.join("\n"))
        })?;
        write_out(out, Box::into_raw(Box::new(SsmkSpec { spec, size_guard: DEFAULT_SIZE_GUARD })))
    })
}

/// # Safety
/// `spec` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ssmk_spec_free(spec: *mut SsmkSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Sets the largest fiber matrix dimension computations may realize.
///
/// # Safety
/// `spec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssmk_spec_set_size_guard(spec: *mut SsmkSpec, guard: usize) -> SsmkStatus {
    guarded(|| {
        let spec = spec.as_mut().ok_or_else(|| Failure(SsmkStatus::NullPointer, "null spec handle".into()))?;
        spec.size_guard = guard;
        Ok(())
    })
}

/// # Safety
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssmk_spec_branch_count(spec: *const SsmkSpec, out: *mut usize) -> SsmkStatus {
    guarded(|| write_out(out, handle(spec)?.spec.branch_count()))
}

/// Writes the map description back out as TOML.
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer. Free the result
/// with `ssmk_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ssmk_spec_to_toml(spec: *const SsmkSpec, out: *mut *mut c_char) -> SsmkStatus {
    guarded(|| {
        let text = CString::new(handle(spec)?.spec.to_string()).map_err(computation)?;
        write_out(out, text.into_raw())
    })
}

/// Number of distinct endpoints of length-`n` backward words from `point`.
/// A null `point` selects a generic point.
///
/// # Safety
/// `spec` must be a live handle, `point` null or a nul-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssmk_backward_count(spec: *const SsmkSpec, point: *const c_char, n: usize, out: *mut u64) -> SsmkStatus {
    guarded(|| {
        let spec = &handle(spec)?.spec;
        let site = if point.is_null() {
            Site::Generic
        } else {
            spec.site(read_str(point)?).map_err(|e| Failure(SsmkStatus::UnknownPoint, e.to_string()))?
        };
        let count = spec.backward_count(site, n).map_err(computation)?;
        write_out(out, u64::try_from(count).map_err(computation)?)
    })
}

/// Rank of K₀ of the level-`n` core.
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssmk_k0_rank(spec: *const SsmkSpec, n: usize, out: *mut usize) -> SsmkStatus {
    guarded(|| {
        let spec = &handle(spec)?.spec;
        let pres = dimension::k0_finite(spec, n).map_err(computation)?;
        write_out(out, pres.rank())
    })
}

/// Inclusion or shift matrix from level `n` to level `n + 1` as JSON, with
/// entries as exact decimal strings.
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer. Free the result
/// with `ssmk_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ssmk_level_map_json(spec: *const SsmkSpec, kind: SsmkMapKind, n: usize, out: *mut *mut c_char) -> SsmkStatus {
    guarded(|| {
        let h = handle(spec)?;
        let mut tower = Tower::new(&h.spec, h.size_guard);
        let map = match kind {
            SsmkMapKind::Inclusion => tower.inclusion(n),
            SsmkMapKind::Beta => tower.beta(n),
        }
        .map_err(computation)?;
        write_json(out, serde_json::to_value(map).map_err(computation)?)
    })
}

/// Trace pairing at level `n` for depths up to `r_max`, as JSON with `p/q`
/// strings.
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer. Free the result
/// with `ssmk_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ssmk_traces_json(spec: *const SsmkSpec, n: usize, r_max: usize, out: *mut *mut c_char) -> SsmkStatus {
    guarded(|| {
        let h = handle(spec)?;
        let mut tower = Tower::new(&h.spec, h.size_guard);
        let pairing = trace_pairing(&mut tower, n, r_max).map_err(computation)?;
        write_json(out, serde_json::to_value(pairing).map_err(computation)?)
    })
}

/// Full inductive-limit report up to level `n_max`, as JSON.
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer. Free the result
/// with `ssmk_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ssmk_limit_json(spec: *const SsmkSpec, n_max: usize, r_max: usize, out: *mut *mut c_char) -> SsmkStatus {
    guarded(|| {
        let h = handle(spec)?;
        let report = dimension::limit_report(&h.spec, n_max, r_max, h.size_guard).map_err(computation)?;
        let mut value = serde_json::to_value(report).map_err(computation)?;
        value["k1"] = serde_json::to_value(k1_metadata(&h.spec)).map_err(computation)?;
        write_json(out, value)
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ssmk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ssmk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
