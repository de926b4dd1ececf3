//! C ABI for the fibril-array detachment simulator.
//!
//! All functions return a [`FibrilStatus`]; outputs go through pointers.
//! Handles are opaque and must be released with the matching `_free`
//! function. On any non-OK status the calling thread can fetch a
//! human-readable message with [`fibril_last_error_message`]; the pointer
//! stays valid until the next failing call on the same thread.

use fibril_core::contact_mechanics::{simulate_detachment, DesignVector, DetachmentTrace};
use fibril_core::{Error, FibrilArray, FibrilMaterial};
use libc::{c_char, c_double, size_t};
use std::cell::RefCell;
use std::ffi::CString;
use std::ptr;

/// Status codes returned by every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FibrilStatus {
    /// Success.
    FibrilOk = 0,
    /// A pointer argument was null.
    FibrilNullPointer = 1,
    /// An argument failed validation (bad geometry, bad compliance, ...).
    FibrilInvalidArgument = 2,
    /// The computation itself failed (singular system, non-detaching, ...).
    FibrilComputeError = 3,
    /// An index was out of range.
    FibrilOutOfRange = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let cstr = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstr));
}

fn fail(status: FibrilStatus, msg: String) -> FibrilStatus {
    set_error(msg);
    status
}

fn fail_with(err: Error) -> FibrilStatus {
    let status = match err {
        Error::InvalidParameter(_)
        | Error::EmptyLayout(_)
        | Error::InvalidLayout(_)
        | Error::InvalidDesign(_) => FibrilStatus::FibrilInvalidArgument,
        _ => FibrilStatus::FibrilComputeError,
    };
    fail(status, err.to_string())
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer is owned by the library; do not free it.
#[no_mangle]
pub extern "C" fn fibril_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |s| s.as_ptr())
    })
}

/// Library version as a static UTF-8 string.
#[no_mangle]
pub extern "C" fn fibril_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Opaque fibril-array handle.
pub struct FibrilArrayHandle {
    inner: FibrilArray,
}

/// Opaque detachment-trace handle.
pub struct FibrilTraceHandle {
    inner: DetachmentTrace,
}

fn material(
    radius_ratio: c_double,
    length_ratio: c_double,
    modulus_ratio: c_double,
) -> Result<FibrilMaterial, Error> {
    FibrilMaterial::new(radius_ratio, length_ratio, modulus_ratio)
}

fn build_array(
    out: *mut *mut FibrilArrayHandle,
    build: impl FnOnce() -> Result<FibrilArray, Error>,
) -> FibrilStatus {
    if out.is_null() {
        return fail(
            FibrilStatus::FibrilNullPointer,
            "output handle pointer is null".into(),
        );
    }
    match build() {
        Ok(inner) => {
            let handle = Box::new(FibrilArrayHandle { inner });
            unsafe { *out = Box::into_raw(handle) };
            FibrilStatus::FibrilOk
        }
        Err(e) => fail_with(e),
    }
}

/// Build a circular array of the given radius (in mean fibril radii) with
/// a square lattice at `spacing`; fibril properties are the three template
/// ratios.
#[no_mangle]
pub extern "C" fn fibril_array_circle(
    radius: c_double,
    spacing: c_double,
    radius_ratio: c_double,
    length_ratio: c_double,
    modulus_ratio: c_double,
    out: *mut *mut FibrilArrayHandle,
) -> FibrilStatus {
    build_array(out, || {
        FibrilArray::build_circle(
            radius,
            spacing,
            material(radius_ratio, length_ratio, modulus_ratio)?,
        )
    })
}

/// Build a square array of the given half-side length.
#[no_mangle]
pub extern "C" fn fibril_array_square(
    half_side: c_double,
    spacing: c_double,
    radius_ratio: c_double,
    length_ratio: c_double,
    modulus_ratio: c_double,
    out: *mut *mut FibrilArrayHandle,
) -> FibrilStatus {
    build_array(out, || {
        FibrilArray::build_square(
            half_side,
            spacing,
            material(radius_ratio, length_ratio, modulus_ratio)?,
        )
    })
}

/// Build an equilateral-triangle array of the given circumradius.
#[no_mangle]
pub extern "C" fn fibril_array_triangle(
    side: c_double,
    spacing: c_double,
    radius_ratio: c_double,
    length_ratio: c_double,
    modulus_ratio: c_double,
    out: *mut *mut FibrilArrayHandle,
) -> FibrilStatus {
    build_array(out, || {
        FibrilArray::build_triangle(
            side,
            spacing,
            material(radius_ratio, length_ratio, modulus_ratio)?,
        )
    })
}

/// Number of fibrils in the array.
#[no_mangle]
pub extern "C" fn fibril_array_size(
    array: *const FibrilArrayHandle,
    out: *mut size_t,
) -> FibrilStatus {
    if array.is_null() || out.is_null() {
        return fail(FibrilStatus::FibrilNullPointer, "null pointer".into());
    }
    unsafe { *out = (*array).inner.n() };
    FibrilStatus::FibrilOk
}

/// Center coordinates of fibril `index` (units of the mean fibril radius).
#[no_mangle]
pub extern "C" fn fibril_array_position(
    array: *const FibrilArrayHandle,
    index: size_t,
    out_x: *mut c_double,
    out_y: *mut c_double,
) -> FibrilStatus {
    if array.is_null() || out_x.is_null() || out_y.is_null() {
        return fail(FibrilStatus::FibrilNullPointer, "null pointer".into());
    }
    let arr = unsafe { &(*array).inner };
    if index >= arr.n() {
        return fail(
            FibrilStatus::FibrilOutOfRange,
            format!("fibril index {index} out of range for {}", arr.n()),
        );
    }
    let p = arr.positions()[index];
    unsafe {
        *out_x = p[0];
        *out_y = p[1];
    }
    FibrilStatus::FibrilOk
}

/// Release an array handle (null is a no-op).
#[no_mangle]
pub extern "C" fn fibril_array_free(array: *mut FibrilArrayHandle) {
    if !array.is_null() {
        drop(unsafe { Box::from_raw(array) });
    }
}

/// Simulate displacement-controlled detachment to complete failure.
///
/// `compliances` must hold `fibril_array_size` positive entries; pass the
/// misalignment slopes as `beta_x`/`beta_y` (0 for pure normal loading).
#[no_mangle]
pub extern "C" fn fibril_simulate(
    array: *const FibrilArrayHandle,
    compliances: *const c_double,
    len: size_t,
    beta_x: c_double,
    beta_y: c_double,
    out: *mut *mut FibrilTraceHandle,
) -> FibrilStatus {
    if array.is_null() || compliances.is_null() || out.is_null() {
        return fail(FibrilStatus::FibrilNullPointer, "null pointer".into());
    }
    let arr = unsafe { &(*array).inner };
    if len != arr.n() {
        return fail(
            FibrilStatus::FibrilInvalidArgument,
            format!("compliance length {len} does not match array size {}", arr.n()),
        );
    }
    let values = unsafe { std::slice::from_raw_parts(compliances, len) };
    let design = match DesignVector::new(values.to_vec()) {
        Ok(d) => d,
        Err(e) => return fail_with(e),
    };
    match simulate_detachment(arr, &design, beta_x, beta_y) {
        Ok(trace) => {
            let handle = Box::new(FibrilTraceHandle { inner: trace });
            unsafe { *out = Box::into_raw(handle) };
            FibrilStatus::FibrilOk
        }
        Err(e) => fail_with(e),
    }
}

/// Adhesive strength: peak total force over the trace, normalized by the
/// all-attached critical load.
#[no_mangle]
pub extern "C" fn fibril_trace_strength(
    trace: *const FibrilTraceHandle,
    out: *mut c_double,
) -> FibrilStatus {
    if trace.is_null() || out.is_null() {
        return fail(FibrilStatus::FibrilNullPointer, "null pointer".into());
    }
    unsafe { *out = (*trace).inner.strength };
    FibrilStatus::FibrilOk
}

/// Number of detachment events (= number of fibrils).
#[no_mangle]
pub extern "C" fn fibril_trace_event_count(
    trace: *const FibrilTraceHandle,
    out: *mut size_t,
) -> FibrilStatus {
    if trace.is_null() || out.is_null() {
        return fail(FibrilStatus::FibrilNullPointer, "null pointer".into());
    }
    unsafe { *out = (*trace).inner.events.len() };
    FibrilStatus::FibrilOk
}

/// Event `index`: the backing displacement at detachment, the total force
/// just before it, and the detached fibril id. Null outputs are skipped.
#[no_mangle]
pub extern "C" fn fibril_trace_event(
    trace: *const FibrilTraceHandle,
    index: size_t,
    out_displacement: *mut c_double,
    out_force: *mut c_double,
    out_fibril_id: *mut size_t,
) -> FibrilStatus {
    if trace.is_null() {
        return fail(FibrilStatus::FibrilNullPointer, "null trace".into());
    }
    let t = unsafe { &(*trace).inner };
    let Some(ev) = t.events.get(index) else {
        return fail(
            FibrilStatus::FibrilOutOfRange,
            format!("event index {index} out of range for {}", t.events.len()),
        );
    };
    unsafe {
        if !out_displacement.is_null() {
            *out_displacement = ev.d_event;
        }
        if !out_force.is_null() {
            *out_force = ev.force_before;
        }
        if !out_fibril_id.is_null() {
            *out_fibril_id = ev.detached_id;
        }
    }
    FibrilStatus::FibrilOk
}

/// Release a trace handle (null is a no-op).
#[no_mangle]
pub extern "C" fn fibril_trace_free(trace: *mut FibrilTraceHandle) {
    if !trace.is_null() {
        drop(unsafe { Box::from_raw(trace) });
    }
}
