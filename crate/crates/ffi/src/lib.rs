//! C ABI for converting signals with a trained quantizer and converter.
//!
//! Every function returns a [`VqvcStatus`]; on failure a message is kept per
//! thread and can be read with [`vqvc_last_error`]. Handles are opaque and
//! owned by the caller, who releases them with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use vqvc::acoustic::AcousticSeq;
use vqvc::codec::{IndexSeq, Postprocess};
use vqvc::pipeline::{convert_signal, Quantizer};
use vqvc::seq2seq::{self, Seq2SeqModel};
use vqvc::tensor::{load_checkpoint, ParamStore};
use vqvc::{vq, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VqvcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Contract = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A trained quantizer.
pub struct VqvcQuantizer {
    inner: Quantizer,
}

/// A trained converter and the postprocessing it was trained with.
pub struct VqvcConverter {
    model: Seq2SeqModel,
    params: ParamStore<f32>,
    post: Postprocess,
}

/// Quantizer indices for one signal, frame-level, `frames × groups`.
pub struct VqvcIndices {
    inner: IndexSeq,
}

/// Converted acoustic frames, `frames × dim`, row-major.
pub struct VqvcFeatures {
    inner: AcousticSeq,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).expect("nul bytes were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn status_of(e: &Error) -> VqvcStatus {
    match e {
        Error::Io { .. } => VqvcStatus::Io,
        Error::Format(_) => VqvcStatus::Format,
        Error::Config(_) => VqvcStatus::InvalidArgument,
        Error::Contract(_) => VqvcStatus::Contract,
        Error::Numeric(_) | Error::Tensor(_) => VqvcStatus::Numeric,
    }
}

struct Fail(VqvcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VqvcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            VqvcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VqvcStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(VqvcStatus::NullArgument, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(VqvcStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn signal_arg<'a>(signal: *const f32, len: usize) -> Result<&'a [f32], Fail> {
    if signal.is_null() {
        return Err(null("signal"));
    }
    Ok(std::slice::from_raw_parts(signal, len))
}

unsafe fn out_arg<'a, T>(out: *mut *mut T) -> Result<&'a mut *mut T, Fail> {
    out.as_mut().ok_or_else(|| null("output pointer"))
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, Fail> {
    h.as_ref().ok_or_else(|| null(what))
}

/// Copies `src` into `dst[..cap]`; `needed` receives `src.len()` either way.
unsafe fn copy_out<T: Copy>(src: &[T], dst: *mut T, cap: usize, needed: *mut usize) -> Result<(), Fail> {
    if let Some(n) = needed.as_mut() {
        *n = src.len();
    }
    if cap < src.len() {
        return Err(Fail(
            VqvcStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(null("buffer"));
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vqvc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vqvc_quantizer_load(path: *const c_char, out: *mut *mut VqvcQuantizer) -> VqvcStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = std::ptr::null_mut();
        let path = path_arg(path)?;
        let (model, params) = vq::from_checkpoint(&load_checkpoint(&path)?)?;
        *out = Box::into_raw(Box::new(VqvcQuantizer {
            inner: Quantizer { model, params },
        }));
        Ok(())
    })
}

/// # Safety
/// `q` must come from [`vqvc_quantizer_load`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vqvc_quantizer_free(q: *mut VqvcQuantizer) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Quantizer indices of `signal[..len]`.
///
/// # Safety
/// `q` must be a live handle, `signal` must point to `len` floats and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn vqvc_quantize(
    q: *const VqvcQuantizer,
    signal: *const f32,
    len: usize,
    out: *mut *mut VqvcIndices,
) -> VqvcStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = std::ptr::null_mut();
        let q = handle(q, "quantizer")?;
        let inner = q.inner.indices(signal_arg(signal, len)?)?;
        *out = Box::into_raw(Box::new(VqvcIndices { inner }));
        Ok(())
    })
}

/// # Safety
/// `idx` must be a live handle; `frames` and `groups` may be null.
#[no_mangle]
pub unsafe extern "C" fn vqvc_indices_shape(idx: *const VqvcIndices, frames: *mut usize, groups: *mut usize) -> VqvcStatus {
    guard(|| {
        let idx = &handle(idx, "indices")?.inner;
        if let Some(f) = frames.as_mut() {
            *f = idx.len();
        }
        if let Some(g) = groups.as_mut() {
            *g = idx.groups();
        }
        Ok(())
    })
}

/// Copies the indices, frame-major, into `buf[..cap]`. `needed` (nullable)
/// receives the required length; a short buffer yields `BufferTooSmall`.
///
/// # Safety
/// `idx` must be a live handle and `buf` writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn vqvc_indices_copy(idx: *const VqvcIndices, buf: *mut u32, cap: usize, needed: *mut usize) -> VqvcStatus {
    guard(|| copy_out(handle(idx, "indices")?.inner.flat(), buf, cap, needed))
}

/// # Safety
/// `idx` must come from [`vqvc_quantize`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vqvc_indices_free(idx: *mut VqvcIndices) {
    if !idx.is_null() {
        drop(Box::from_raw(idx));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vqvc_converter_load(path: *const c_char, out: *mut *mut VqvcConverter) -> VqvcStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = std::ptr::null_mut();
        let path = path_arg(path)?;
        let (model, post, params) = seq2seq::from_checkpoint(&load_checkpoint(&path)?)?;
        *out = Box::into_raw(Box::new(VqvcConverter { model, params, post }));
        Ok(())
    })
}

/// Name of the postprocessing the converter was trained with
/// (`none`, `separate`, `combine` or `combine+separate`). Static storage.
///
/// # Safety
/// `c` must be a live handle or null (which yields null).
#[no_mangle]
pub unsafe extern "C" fn vqvc_converter_postprocess(c: *const VqvcConverter) -> *const c_char {
    let Some(c) = c.as_ref() else {
        return std::ptr::null();
    };
    let name: &'static CStr = match (c.post.combine, c.post.separate) {
        (false, false) => c"none",
        (false, true) => c"separate",
        (true, false) => c"combine",
        (true, true) => c"combine+separate",
    };
    name.as_ptr()
}

/// # Safety
/// `c` must come from [`vqvc_converter_load`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vqvc_converter_free(c: *mut VqvcConverter) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Converts `signal[..len]` to target-voice frames. The quantizer must have
/// the codebook shape the converter was trained on (`Contract` otherwise).
///
/// # Safety
/// Handles must be live, `signal` must point to `len` floats and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn vqvc_convert(
    c: *const VqvcConverter,
    q: *const VqvcQuantizer,
    signal: *const f32,
    len: usize,
    out: *mut *mut VqvcFeatures,
) -> VqvcStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = std::ptr::null_mut();
        let c = handle(c, "converter")?;
        let q = handle(q, "quantizer")?;
        let inner = convert_signal(&q.inner, &c.model, &c.params, c.post, signal_arg(signal, len)?)?;
        *out = Box::into_raw(Box::new(VqvcFeatures { inner }));
        Ok(())
    })
}

/// Shape of converted frames; `truncated` is set to 1 when decoding hit the
/// length cap without predicting a stop. Any output pointer may be null.
///
/// # Safety
/// `f` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vqvc_features_shape(
    f: *const VqvcFeatures,
    frames: *mut usize,
    dim: *mut usize,
    truncated: *mut i32,
) -> VqvcStatus {
    guard(|| {
        let f = &handle(f, "features")?.inner;
        if let Some(x) = frames.as_mut() {
            *x = f.len();
        }
        if let Some(x) = dim.as_mut() {
            *x = f.dim();
        }
        if let Some(x) = truncated.as_mut() {
            *x = i32::from(f.truncated);
        }
        Ok(())
    })
}

/// Copies the frames, row-major, into `buf[..cap]`. `needed` (nullable)
/// receives the required length; a short buffer yields `BufferTooSmall`.
///
/// # Safety
/// `f` must be a live handle and `buf` writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn vqvc_features_copy(f: *const VqvcFeatures, buf: *mut f32, cap: usize, needed: *mut usize) -> VqvcStatus {
    guard(|| copy_out(handle(f, "features")?.inner.data(), buf, cap, needed))
}

/// # Safety
/// `f` must come from [`vqvc_convert`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vqvc_features_free(f: *mut VqvcFeatures) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}
