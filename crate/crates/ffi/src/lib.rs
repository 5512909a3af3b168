//! C interface to `ekvnet`.
//!
//! Models are opaque `EkvModel` handles created by `ekv_model_load` or
//! `ekv_model_from_json` and released with `ekv_model_free`. Every fallible
//! call returns an `EkvStatus`; on failure the message is available from
//! `ekv_last_error_message` on the same thread. Biases are given as
//! `(v_gs, v_ds)` with the source as reference.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ekvnet::network::{eps_predict, ids_full};
use ekvnet::veriloga::{emit_veriloga, TanhStyle};
use ekvnet::{core_model, BiasPoint, CoreParams, Error, TrainedModel};

/// Opaque model handle.
pub struct EkvModel {
    inner: TrainedModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EkvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidModel = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: EkvStatus, msg: impl Into<String>) -> EkvStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> EkvStatus {
    match e {
        Error::Io { .. } => EkvStatus::Io,
        Error::Json(_) | Error::Parse { .. } => EkvStatus::Parse,
        Error::ModelFile(_) | Error::InvalidCore(_) | Error::Shape(_) | Error::NonFinite(_) => EkvStatus::InvalidModel,
        _ => EkvStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> EkvStatus) -> EkvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(EkvStatus::Ok) => {
            set_error("");
            EkvStatus::Ok
        }
        Ok(s) => s,
        Err(_) => fail(EkvStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, EkvStatus> {
    if p.is_null() {
        return Err(fail(EkvStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(EkvStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn bias(v_gs: f64, v_ds: f64) -> Result<BiasPoint, EkvStatus> {
    let b = BiasPoint::from_vgs_vds(v_gs, v_ds);
    if b.is_finite() {
        Ok(b)
    } else {
        Err(fail(EkvStatus::InvalidArgument, "bias voltages must be finite"))
    }
}

unsafe fn model_arg<'a>(m: *const EkvModel) -> Result<&'a TrainedModel, EkvStatus> {
    m.as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| fail(EkvStatus::NullPointer, "model handle is null"))
}

unsafe fn emit_model(out: *mut *mut EkvModel, loaded: ekvnet::Result<TrainedModel>) -> EkvStatus {
    match loaded.and_then(|m| m.validate().map(|_| m)) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(EkvModel { inner: m }));
            EkvStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Loads a model file. On success `*out` owns a new handle.
#[no_mangle]
pub unsafe extern "C" fn ekv_model_load(path: *const c_char, out: *mut *mut EkvModel) -> EkvStatus {
    guard(|| {
        if out.is_null() {
            return fail(EkvStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = tri!(str_arg(path, "path"));
        emit_model(out, TrainedModel::load(path))
    })
}

/// Parses a model from its JSON text.
#[no_mangle]
pub unsafe extern "C" fn ekv_model_from_json(json: *const c_char, out: *mut *mut EkvModel) -> EkvStatus {
    guard(|| {
        if out.is_null() {
            return fail(EkvStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = tri!(str_arg(json, "json"));
        emit_model(out, TrainedModel::from_json(text))
    })
}

/// Releases a handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ekv_model_free(model: *mut EkvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Drain current (A), transconductance and output conductance (A/V).
/// Any of the output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn ekv_model_ids(
    model: *const EkvModel,
    v_gs: f64,
    v_ds: f64,
    i_ds: *mut f64,
    g_m: *mut f64,
    g_ds: *mut f64,
) -> EkvStatus {
    guard(|| {
        let m = tri!(model_arg(model));
        let op = ids_full(&tri!(bias(v_gs, v_ds)), m);
        for (p, v) in [(i_ds, op.i_ds), (g_m, op.g_m), (g_ds, op.g_ds)] {
            if !p.is_null() {
                *p = v;
            }
        }
        EkvStatus::Ok
    })
}

/// The neural correction factor alone.
#[no_mangle]
pub unsafe extern "C" fn ekv_model_eps(model: *const EkvModel, v_gs: f64, v_ds: f64, eps: *mut f64) -> EkvStatus {
    guard(|| {
        let m = tri!(model_arg(model));
        if eps.is_null() {
            return fail(EkvStatus::NullPointer, "eps is null");
        }
        *eps = eps_predict(&tri!(bias(v_gs, v_ds)), &m.network);
        EkvStatus::Ok
    })
}

/// Core-model current for explicit parameters.
#[no_mangle]
pub unsafe extern "C" fn ekv_core_ids(
    p: f64,
    v_ss: f64,
    v_t: f64,
    beta: f64,
    v_gs: f64,
    v_ds: f64,
    i_ds: *mut f64,
) -> EkvStatus {
    guard(|| {
        if i_ds.is_null() {
            return fail(EkvStatus::NullPointer, "i_ds is null");
        }
        let core = match CoreParams::new(p, v_ss, v_t, beta) {
            Ok(c) => c,
            Err(e) => return fail(EkvStatus::InvalidArgument, e.to_string()),
        };
        *i_ds = core_model::ids_core(&tri!(bias(v_gs, v_ds)), &core);
        EkvStatus::Ok
    })
}

/// Writes the VerilogA text, NUL-terminated, into `buf`. `*needed` (if not
/// null) receives the buffer size required including the terminator; when
/// `len` is smaller the call returns `BUFFER_TOO_SMALL` and writes nothing.
/// `exp_tanh` nonzero selects the exp-based tanh.
#[no_mangle]
pub unsafe extern "C" fn ekv_model_export_veriloga(
    model: *const EkvModel,
    module_name: *const c_char,
    exp_tanh: c_int,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> EkvStatus {
    guard(|| {
        let m = tri!(model_arg(model));
        let name = tri!(str_arg(module_name, "module_name"));
        let style = if exp_tanh != 0 {
            TanhStyle::ExpFallback
        } else {
            TanhStyle::Builtin
        };
        let va = match emit_veriloga(m, name, style) {
            Ok(v) => v,
            Err(e) => return fail(status_of(&e), e.to_string()),
        };
        let size = va.text.len() + 1;
        if !needed.is_null() {
            *needed = size;
        }
        if buf.is_null() || len < size {
            return fail(EkvStatus::BufferTooSmall, format!("need {size} bytes, got {len}"));
        }
        ptr::copy_nonoverlapping(va.text.as_ptr(), buf.cast::<u8>(), va.text.len());
        *buf.add(va.text.len()) = 0;
        EkvStatus::Ok
    })
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns its full length plus one.
#[no_mangle]
pub unsafe extern "C" fn ekv_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len() + 1
    })
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ekv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
