//! C ABI over the `subfourier` core.
//!
//! Every fallible call returns an [`SfStatus`]; on failure the message is kept
//! per thread and read back with [`sf_last_error_message`]. Handles are opaque
//! and owned by the caller until passed to their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use subfourier::classical::classical_diffusion;
use subfourier::floquet::floquet_spectrum;
use subfourier::model::{cesium_hbar_eff, init_state, DriveSchedule, InitialState, SystemParams};
use subfourier::propagator::{PropagationError, Propagator};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    BufferTooSmall = 3,
    Truncation = 4,
    Numerical = 5,
    Panic = 6,
}

/// Rotor parameters plus a prepared propagator.
pub struct SfSystem {
    params: SystemParams,
    propagator: Propagator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl std::fmt::Display) {
    let text = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn fail(status: SfStatus, msg: impl std::fmt::Display) -> SfStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> SfStatus) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SfStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// Copies the last error of this thread into `buf` (NUL-terminated, truncated
/// to fit) and returns the full message length without the NUL. Returns 0 when
/// there is no error; `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

#[no_mangle]
pub extern "C" fn sf_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// `kbar = 8 omega_recoil T` for cesium at a kick period in microseconds.
#[no_mangle]
pub extern "C" fn sf_hbar_eff(period_us: f64) -> f64 {
    cesium_hbar_eff(period_us)
}

/// Creates a system on the `2 half_width + 1` site lattice.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn sf_system_new(
    kick_strength: f64,
    hbar_eff: f64,
    quasimomentum: f64,
    half_width: usize,
    out: *mut *mut SfSystem,
) -> SfStatus {
    if out.is_null() {
        return fail(SfStatus::NullPointer, "out is null");
    }
    *out = std::ptr::null_mut();
    guard(|| match SystemParams::new(kick_strength, hbar_eff, quasimomentum, half_width) {
        Ok(params) => {
            let propagator = Propagator::new(&params);
            *out = Box::into_raw(Box::new(SfSystem { params, propagator }));
            SfStatus::Ok
        }
        Err(e) => fail(SfStatus::InvalidParameter, e),
    })
}

/// # Safety
/// `system` must be null or come from [`sf_system_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sf_system_free(system: *mut SfSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Lattice dimension `2 half_width + 1`, or 0 for a null handle.
///
/// # Safety
/// `system` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_system_dim(system: *const SfSystem) -> usize {
    system.as_ref().map_or(0, |s| s.params.dim())
}

/// Evolves `|p = 0>` for `periods` periods of the two-frequency drive and
/// writes `<p^2>` (scaled, `p = kbar (m + beta)`) and the zero-momentum
/// population after each period. Either output may be null; non-null outputs
/// need room for `periods` values.
///
/// # Safety
/// `system` must be a live handle; non-null outputs must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_evolve(
    system: *const SfSystem,
    ratio: f64,
    lambda0: f64,
    periods: usize,
    p0_window: usize,
    p2_out: *mut f64,
    p0_out: *mut f64,
    len: usize,
) -> SfStatus {
    let Some(system) = system.as_ref() else {
        return fail(SfStatus::NullPointer, "system is null");
    };
    if (!p2_out.is_null() || !p0_out.is_null()) && len < periods {
        return fail(SfStatus::BufferTooSmall, format!("buffer holds {len} values, need {periods}"));
    }
    guard(|| {
        let schedule = match DriveSchedule::new(ratio, lambda0, periods) {
            Ok(s) => s,
            Err(e) => return fail(SfStatus::InvalidParameter, e),
        };
        let mut state = match init_state(&system.params, InitialState::DeltaAtZero) {
            Ok(s) => s,
            Err(e) => return fail(SfStatus::InvalidParameter, e),
        };
        match system.propagator.evolve(&mut state, &schedule, p0_window) {
            Ok(ev) => {
                for (i, r) in ev.records.iter().enumerate() {
                    if !p2_out.is_null() {
                        *p2_out.add(i) = r.p2;
                    }
                    if !p0_out.is_null() {
                        *p0_out.add(i) = r.p0;
                    }
                }
                SfStatus::Ok
            }
            Err(e @ PropagationError::TruncationViolated { .. }) => fail(SfStatus::Truncation, e),
            Err(e) => fail(SfStatus::InvalidParameter, e),
        }
    })
}

/// Eigenphases of the one-period operator `U(lambda)` in ascending order,
/// with the weight of `|p = 0>` on each eigenstate. Both buffers need
/// [`sf_system_dim`] entries; `weights` may be null.
///
/// # Safety
/// `system` must be a live handle; `phases` (and `weights` if non-null) valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_floquet_eigenphases(
    system: *const SfSystem,
    lambda: f64,
    phases: *mut f64,
    weights: *mut f64,
    len: usize,
) -> SfStatus {
    let Some(system) = system.as_ref() else {
        return fail(SfStatus::NullPointer, "system is null");
    };
    if phases.is_null() {
        return fail(SfStatus::NullPointer, "phases is null");
    }
    let dim = system.params.dim();
    if len < dim {
        return fail(SfStatus::BufferTooSmall, format!("buffer holds {len} values, need {dim}"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return fail(SfStatus::InvalidParameter, format!("lambda must lie in [0, 1] (got {lambda})"));
    }
    guard(|| {
        let psi0 = match init_state(&system.params, InitialState::DeltaAtZero) {
            Ok(s) => s,
            Err(e) => return fail(SfStatus::InvalidParameter, e),
        };
        match floquet_spectrum(&system.params, lambda, &psi0) {
            Ok(spec) => {
                std::ptr::copy_nonoverlapping(spec.eigenphases.as_ptr(), phases, dim);
                if !weights.is_null() {
                    std::ptr::copy_nonoverlapping(spec.weights.as_ptr(), weights, dim);
                }
                SfStatus::Ok
            }
            Err(e) => fail(SfStatus::Numerical, e),
        }
    })
}

/// Classical momentum diffusion per kick of a uniform `p = 0` ensemble, in
/// the kick-strength units of the standard map (`D ~ K^2 / 2` well above chaos).
///
/// # Safety
/// `d_per_kick` must be valid for a write; `d_err` may be null.
#[no_mangle]
pub unsafe extern "C" fn sf_classical_diffusion(
    kick_strength: f64,
    ratio: f64,
    lambda0: f64,
    periods: usize,
    ensemble_size: usize,
    seed: u64,
    d_per_kick: *mut f64,
    d_err: *mut f64,
) -> SfStatus {
    if d_per_kick.is_null() {
        return fail(SfStatus::NullPointer, "d_per_kick is null");
    }
    guard(|| {
        let schedule = match DriveSchedule::new(ratio, lambda0, periods) {
            Ok(s) => s,
            Err(e) => return fail(SfStatus::InvalidParameter, e),
        };
        match classical_diffusion(kick_strength, &schedule, ensemble_size, seed, None) {
            Ok(d) => {
                *d_per_kick = d.d_per_kick;
                if !d_err.is_null() {
                    *d_err = d.d_per_kick_err;
                }
                SfStatus::Ok
            }
            Err(e) => fail(SfStatus::InvalidParameter, e),
        }
    })
}
