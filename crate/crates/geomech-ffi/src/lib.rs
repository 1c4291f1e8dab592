//! C ABI for the geomech toolkit: opaque handles, integer status codes and
//! a thread-local last-error message. The header is generated by cbindgen
//! into `include/geomech.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use geomech::dynamics::{integrate, IntegrateOptions, Trajectory};
use geomech::error::Error;
use geomech::hamjac;
use geomech::quantize::schrodinger_operator;
use geomech::system::LoadedSystem;

/// Status codes returned by fallible entry points.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Schema = 4,
    Domain = 5,
    Numeric = 6,
    Precondition = 7,
    OrbitNotClosed = 8,
    Unsupported = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let owned = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(owned));
}

fn status_of(err: &Error) -> GmStatus {
    match err {
        Error::Io(_) => GmStatus::Io,
        Error::Json(_)
        | Error::Schema { .. }
        | Error::Syntax { .. }
        | Error::UnknownSymbol { .. } => GmStatus::Schema,
        Error::Domain(_) | Error::LightQuadric { .. } | Error::ZeroSection { .. } => {
            GmStatus::Domain
        }
        Error::OrbitNotClosed { .. } => GmStatus::OrbitNotClosed,
        Error::Dimension { .. } | Error::OrderCap { .. } => GmStatus::Unsupported,
        Error::SingularMetric { .. }
        | Error::RegularityFloor { .. }
        | Error::Eigensolve(_)
        | Error::TimeDependentCoefficient { .. }
        | Error::NotAdapted(_)
        | Error::BindingLength { .. }
        | Error::OutOfRange { .. } => GmStatus::Numeric,
        Error::Precondition(_) => GmStatus::Precondition,
    }
}

fn fail(err: Error) -> GmStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

fn guarded<F: FnOnce() -> GmStatus>(f: F) -> GmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("panic inside the library".to_string());
            GmStatus::Panic
        }
    }
}

/// Opaque loaded system handle.
pub struct GmSystem {
    inner: LoadedSystem,
}

/// Opaque trajectory handle.
pub struct GmTrajectory {
    inner: Trajectory,
}

unsafe fn cstr_arg<'a>(ptr_: *const c_char) -> Result<&'a str, GmStatus> {
    if ptr_.is_null() {
        set_error("null pointer argument".into());
        return Err(GmStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr_) }.to_str().map_err(|_| {
        set_error("argument is not valid UTF-8".into());
        GmStatus::InvalidUtf8
    })
}

/// Copies the last error message into `buf` (truncated to `cap - 1` bytes,
/// always NUL-terminated when `cap > 0`). Returns the full message length.
#[no_mangle]
pub unsafe extern "C" fn gm_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let borrow = slot.borrow();
        let msg = borrow.as_ref().map(|c| c.as_bytes()).unwrap_or(b"");
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Loads a system description from a JSON file; null on failure (see
/// `gm_last_error`).
#[no_mangle]
pub unsafe extern "C" fn gm_system_load(path: *const c_char) -> *mut GmSystem {
    let Ok(path) = (unsafe { cstr_arg(path) }) else {
        return ptr::null_mut();
    };
    match LoadedSystem::from_path(Path::new(path)) {
        Ok(inner) => Box::into_raw(Box::new(GmSystem { inner })),
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

/// Loads a system description from a JSON string; null on failure.
#[no_mangle]
pub unsafe extern "C" fn gm_system_load_json(json: *const c_char) -> *mut GmSystem {
    let Ok(text) = (unsafe { cstr_arg(json) }) else {
        return ptr::null_mut();
    };
    match LoadedSystem::from_json(text) {
        Ok(inner) => Box::into_raw(Box::new(GmSystem { inner })),
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn gm_system_free(sys: *mut GmSystem) {
    if !sys.is_null() {
        drop(unsafe { Box::from_raw(sys) });
    }
}

/// Number of configuration-space coordinates.
#[no_mangle]
pub unsafe extern "C" fn gm_system_dim(sys: *const GmSystem) -> usize {
    if sys.is_null() {
        return 0;
    }
    unsafe { &*sys }.inner.sys.dim()
}

/// Integrates the evolution field from the system's default seed. Pass
/// `has_energy = false` to seed at unit speed instead of an energy level.
#[no_mangle]
pub unsafe extern "C" fn gm_simulate(
    sys: *const GmSystem,
    energy: f64,
    has_energy: bool,
    span: f64,
    rel_tol: f64,
    out: *mut *mut GmTrajectory,
) -> GmStatus {
    if sys.is_null() || out.is_null() {
        set_error("null pointer argument".into());
        return GmStatus::NullArgument;
    }
    let sys = unsafe { &*sys };
    let mut result: *mut GmTrajectory = ptr::null_mut();
    let code = guarded(|| {
        let loaded = &sys.inner;
        let seed = match loaded.default_seed(if has_energy { Some(energy) } else { None }) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let field = match loaded.sys.newton_field() {
            Ok(f) => f,
            Err(e) => return fail(e),
        };
        match integrate(
            &loaded.sys,
            &field,
            &seed,
            &IntegrateOptions::adaptive(span, rel_tol),
        ) {
            Ok(traj) => {
                result = Box::into_raw(Box::new(GmTrajectory { inner: traj }));
                GmStatus::Ok
            }
            Err(e) => fail(e),
        }
    });
    if code == GmStatus::Ok {
        unsafe { *out = result };
    }
    code
}

#[no_mangle]
pub unsafe extern "C" fn gm_trajectory_free(traj: *mut GmTrajectory) {
    if !traj.is_null() {
        drop(unsafe { Box::from_raw(traj) });
    }
}

#[no_mangle]
pub unsafe extern "C" fn gm_trajectory_len(traj: *const GmTrajectory) -> usize {
    if traj.is_null() {
        return 0;
    }
    unsafe { &*traj }.inner.len()
}

/// Number of values per sample row: `2*dim + 5` (parameter, coordinates,
/// velocities, action, duration, length, energy).
#[no_mangle]
pub unsafe extern "C" fn gm_trajectory_row_len(traj: *const GmTrajectory) -> usize {
    if traj.is_null() {
        return 0;
    }
    2 * unsafe { &*traj }.inner.names.len() + 5
}

/// Copies sample `index` into `buf`; `cap` must be at least the row length.
#[no_mangle]
pub unsafe extern "C" fn gm_trajectory_sample(
    traj: *const GmTrajectory,
    index: usize,
    buf: *mut f64,
    cap: usize,
) -> GmStatus {
    if traj.is_null() || buf.is_null() {
        set_error("null pointer argument".into());
        return GmStatus::NullArgument;
    }
    let t = &unsafe { &*traj }.inner;
    if index >= t.len() {
        set_error(format!(
            "sample index {index} out of range ({} samples)",
            t.len()
        ));
        return GmStatus::Precondition;
    }
    let s = &t.samples[index];
    let row_len = 2 * s.state.dim() + 5;
    if cap < row_len {
        set_error(format!("buffer holds {cap} values, row needs {row_len}"));
        return GmStatus::Precondition;
    }
    let mut row = Vec::with_capacity(row_len);
    row.push(s.lambda);
    row.extend_from_slice(&s.state.x);
    row.extend_from_slice(&s.state.v);
    row.extend_from_slice(&[s.action, s.duration, s.length, s.energy]);
    unsafe { ptr::copy_nonoverlapping(row.as_ptr(), buf, row_len) };
    GmStatus::Ok
}

/// Writes the trajectory CSV (same format as the CLI `simulate` artifact).
#[no_mangle]
pub unsafe extern "C" fn gm_trajectory_write_csv(
    traj: *const GmTrajectory,
    path: *const c_char,
) -> GmStatus {
    if traj.is_null() {
        set_error("null pointer argument".into());
        return GmStatus::NullArgument;
    }
    let path = match unsafe { cstr_arg(path) } {
        Ok(p) => p,
        Err(code) => return code,
    };
    let t = &unsafe { &*traj }.inner;
    let file = match std::fs::File::create(path) {
        Ok(f) => f,
        Err(e) => return fail(e.into()),
    };
    match t.write_csv(std::io::BufWriter::new(file)) {
        Ok(()) => GmStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Closed-orbit functionals from the system's default seed at the energy
/// level: action, period and wave time around the cycle (`tau` is NaN on the
/// zero level).
#[no_mangle]
pub unsafe extern "C" fn gm_cycle(
    sys: *const GmSystem,
    energy: f64,
    max_span: f64,
    action_out: *mut f64,
    period_out: *mut f64,
    tau_out: *mut f64,
) -> GmStatus {
    if sys.is_null() || action_out.is_null() || period_out.is_null() || tau_out.is_null() {
        set_error("null pointer argument".into());
        return GmStatus::NullArgument;
    }
    let sys = unsafe { &*sys };
    let mut cycle_result = None;
    let code = guarded(|| {
        let loaded = &sys.inner;
        let seed = match loaded.default_seed(Some(energy)) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        match hamjac::cycle_action(&loaded.sys, energy, &seed, max_span) {
            Ok(cycle) => {
                cycle_result = Some(cycle);
                GmStatus::Ok
            }
            Err(e) => fail(e),
        }
    });
    if let Some(cycle) = cycle_result {
        unsafe {
            *action_out = cycle.action;
            *period_out = cycle.period;
            *tau_out = cycle.tau.unwrap_or(f64::NAN);
        }
    }
    code
}

/// Text form of the system's Schrodinger operator
/// (`-(hbar^2/2) Laplacian + U`). Free with `gm_string_free`; null on
/// failure.
#[no_mangle]
pub unsafe extern "C" fn gm_schrodinger_text(sys: *const GmSystem) -> *mut c_char {
    if sys.is_null() {
        set_error("null pointer argument".into());
        return ptr::null_mut();
    }
    let sys = unsafe { &*sys };
    let loaded = &sys.inner;
    match schrodinger_operator(&loaded.sys, loaded.hbar) {
        Ok(op) => {
            let text = op.pretty(&loaded.sys.names().to_vec());
            CString::new(text)
                .map(CString::into_raw)
                .unwrap_or(ptr::null_mut())
        }
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

/// Hertz-reduces the extended system (using its declared time coordinate and
/// momentum level) and returns the reduced description as a JSON string.
/// Free with `gm_string_free`; null on failure.
#[no_mangle]
pub unsafe extern "C" fn gm_hertz_reduce_json(sys: *const GmSystem) -> *mut c_char {
    if sys.is_null() {
        set_error("null pointer argument".into());
        return ptr::null_mut();
    }
    let sys = unsafe { &*sys };
    let loaded = &sys.inner;
    let result = (|| -> Result<String, Error> {
        let time_index = loaded
            .time_index
            .ok_or_else(|| Error::Precondition("system has no time_coordinate".into()))?;
        let p0 = loaded
            .p0
            .ok_or_else(|| Error::Precondition("system has no momentum level P0".into()))?;
        let reduced = geomech::dynamics::hertz_reduce(
            &loaded.sys,
            time_index,
            p0,
            &loaded.desc.sample_points,
        )?;
        Ok(serde_json::to_string(
            &loaded.reduced_description(&reduced),
        )?)
    })();
    match result {
        Ok(json) => CString::new(json)
            .map(CString::into_raw)
            .unwrap_or(ptr::null_mut()),
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn gm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Runs one verification criterion (ids 1-11). Returns `Ok` when it passes;
/// on failure the detail is available through `gm_last_error`.
#[no_mangle]
pub extern "C" fn gm_verify_criterion(id: usize) -> GmStatus {
    guarded(|| match geomech::acceptance::run_criterion(id) {
        Some(outcome) if outcome.passed => GmStatus::Ok,
        Some(outcome) => {
            set_error(format!("{}: {}", outcome.name, outcome.detail));
            GmStatus::Numeric
        }
        None => {
            set_error(format!("no criterion {id}; valid ids are 1-11"));
            GmStatus::Precondition
        }
    })
}
