//! C ABI over `nelson-ibc`.
//!
//! A model is built from a TOML configuration string (the same format the CLI
//! reads) and handed out as an opaque pointer. Every call returns a
//! [`NibStatus`]; on failure the message is kept per thread and read back with
//! [`nib_last_error_message`].
//!
//! Matrices are written row-major in the value representation. Inner products
//! in that representation carry the measure from [`nib_model_measure`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nelson_ibc::config::RunConfig;
use nelson_ibc::instance::Instance;
use nelson_ibc::linalg::shifted_inverse;
use nelson_ibc::ops_core::TdMode;
use nelson_ibc::positivity::weighted_eigen;
use nelson_ibc::resolvent::HamiltonianBuild;
use nelson_ibc::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NibStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    ResourceLimit = 4,
    BufferTooSmall = 5,
    Numerical = 6,
    Panic = 7,
}

/// Opaque model handle.
pub struct NibModel {
    inst: Instance,
    build: HamiltonianBuild,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: NibStatus, msg: impl Into<String>) -> NibStatus {
    set_error(msg);
    status
}

fn from_error(err: Error) -> NibStatus {
    let status = match err {
        Error::InvalidConfig(_) => NibStatus::InvalidConfig,
        Error::ResourceLimit { .. } => NibStatus::ResourceLimit,
        _ => NibStatus::Numerical,
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> NibStatus) -> NibStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(NibStatus::Panic, "internal panic"),
    }
}

fn model_ref<'a>(model: *const NibModel) -> Result<&'a NibModel, NibStatus> {
    // SAFETY: non-null handles come from `nib_model_new` and are live until freed.
    unsafe { model.as_ref() }.ok_or_else(|| fail(NibStatus::NullPointer, "null model handle"))
}

fn out_slice<'a>(buf: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], NibStatus> {
    if buf.is_null() {
        return Err(fail(NibStatus::NullPointer, "null output buffer"));
    }
    if len < needed {
        return Err(fail(NibStatus::BufferTooSmall, format!("buffer holds {len} values, {needed} needed")));
    }
    // SAFETY: caller guarantees `buf` points to `len` writable doubles.
    Ok(unsafe { std::slice::from_raw_parts_mut(buf, needed) })
}

fn build_model(text: &str) -> Result<NibModel, Error> {
    let config = RunConfig::from_toml(text)?;
    let inst = Instance::new(&config.model, &config.grid, config.fock.n_max, Some(config.fock.max_dim))?;
    // The assembled operator does not depend on the auxiliary λ.
    let lambda = config.resolvent.lambda.value().unwrap_or(1.0);
    let build = HamiltonianBuild::new(&inst, lambda, &TdMode::GridConsistent)?;
    Ok(NibModel { inst, build })
}

/// Builds a model from a NUL-terminated TOML string; an empty string gives the
/// reference configuration. On success `*out` owns a handle to release with
/// [`nib_model_free`].
///
/// # Safety
/// `config_toml` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn nib_model_new(config_toml: *const c_char, out: *mut *mut NibModel) -> NibStatus {
    guard(|| {
        if config_toml.is_null() || out.is_null() {
            return fail(NibStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(config_toml).to_str() else {
            return fail(NibStatus::InvalidUtf8, "configuration is not UTF-8");
        };
        match build_model(text) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(model));
                NibStatus::Ok
            }
            Err(e) => {
                *out = ptr::null_mut();
                from_error(e)
            }
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`nib_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nib_model_free(model: *mut NibModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Basis dimension.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nib_model_dimension(model: *const NibModel, out: *mut usize) -> NibStatus {
    guard(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(NibStatus::NullPointer, "null output");
        }
        *out = m.inst.dim();
        NibStatus::Ok
    })
}

/// Writes the measure weights (`dimension` values).
///
/// # Safety
/// `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nib_model_measure(model: *const NibModel, buf: *mut f64, len: usize) -> NibStatus {
    guard(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        match out_slice(buf, len, m.inst.dim()) {
            Ok(dst) => {
                dst.copy_from_slice(m.inst.measure.as_slice());
                NibStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Writes the Hamiltonian, `dimension²` values row-major.
///
/// # Safety
/// `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nib_model_hamiltonian(model: *const NibModel, buf: *mut f64, len: usize) -> NibStatus {
    guard(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let n = m.inst.dim();
        match out_slice(buf, len, n * n) {
            Ok(dst) => {
                let h = &m.build.h_g;
                for i in 0..n {
                    for j in 0..n {
                        dst[i * n + j] = h[(i, j)];
                    }
                }
                NibStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Writes `(H + λ)^{-1}`, `dimension²` values row-major. `-λ` must not be an
/// eigenvalue.
///
/// # Safety
/// `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nib_model_resolvent(
    model: *const NibModel,
    lambda: f64,
    buf: *mut f64,
    len: usize,
) -> NibStatus {
    guard(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if !lambda.is_finite() {
            return fail(NibStatus::InvalidConfig, "lambda must be finite");
        }
        let n = m.inst.dim();
        let dst = match out_slice(buf, len, n * n) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match shifted_inverse(&m.build.h_g, lambda) {
            Ok(r) => {
                for i in 0..n {
                    for j in 0..n {
                        dst[i * n + j] = r[(i, j)];
                    }
                }
                NibStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Lowest eigenvalue and, when `vec` is non-null, its eigenvector
/// (`dimension` values, unit norm in the measure, largest entry positive).
///
/// # Safety
/// `energy` must be writable; `vec`, if non-null, must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nib_model_ground_state(
    model: *const NibModel,
    energy: *mut f64,
    vec: *mut f64,
    len: usize,
) -> NibStatus {
    guard(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if energy.is_null() {
            return fail(NibStatus::NullPointer, "null energy output");
        }
        let (values, vectors) = weighted_eigen(&m.build.h_g, &m.inst.measure);
        if !values[0].is_finite() {
            return fail(NibStatus::Numerical, "eigenvalue computation failed");
        }
        if !vec.is_null() {
            let dst = match out_slice(vec, len, m.inst.dim()) {
                Ok(d) => d,
                Err(s) => return s,
            };
            let col = vectors.column(0);
            let sign = if col.iter().fold(0.0f64, |a, &x| if x.abs() > a.abs() { x } else { a }) < 0.0 {
                -1.0
            } else {
                1.0
            };
            for (d, x) in dst.iter_mut().zip(col.iter()) {
                *d = sign * x;
            }
        }
        *energy = values[0];
        NibStatus::Ok
    })
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nib_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn nib_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
