//! C ABI over the baseline codec and trained models.
//!
//! Every function returns an [`EjStatus`]. On failure a description is
//! available from [`ej_last_error`] until the next call on the same thread.
//! Buffers returned by the library are released with [`ej_buffer_free`] and
//! models with [`ej_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use editjpeg::codec::{decode_baseline, encode_baseline, CodecError, QuantTablePair, RgbImage};
use editjpeg::pipeline::{neural_encode, Model};
use editjpeg::train::{Checkpoint, TrainError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Internal = 5,
}

/// Bytes owned by the library.
#[repr(C)]
#[derive(Debug)]
pub struct EjBuffer {
    pub data: *mut u8,
    pub len: usize,
}

/// A trained model loaded from a checkpoint.
pub struct EjModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(EjStatus, String);

impl From<CodecError> for Failure {
    fn from(e: CodecError) -> Self {
        let status = match e {
            CodecError::InvalidImage(_) | CodecError::InvalidQuality(_) => EjStatus::InvalidArgument,
            _ => EjStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let status = if matches!(e, TrainError::Io { .. }) { EjStatus::Io } else { EjStatus::Format };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EjStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EjStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EjStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(EjStatus::NullPointer, format!("{what} is null"))
}

fn into_buffer(bytes: Vec<u8>) -> EjBuffer {
    let mut boxed = bytes.into_boxed_slice();
    let len = boxed.len();
    let data = boxed.as_mut_ptr();
    std::mem::forget(boxed);
    EjBuffer { data, len }
}

unsafe fn image_from(rgb: *const u8, width: usize, height: usize) -> Result<RgbImage, Failure> {
    if rgb.is_null() {
        return Err(null("rgb"));
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Failure(EjStatus::InvalidArgument, "image size overflows".into()))?;
    let data = std::slice::from_raw_parts(rgb, len).to_vec();
    Ok(RgbImage::new(width, height, data)?)
}

/// Description of the last failure on this thread; empty after success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn ej_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Encodes interleaved RGB (`width * height * 3` bytes) with the standard
/// tables scaled to `quality` (1 to 100).
///
/// # Safety
/// `rgb` must point to `width * height * 3` readable bytes and `out` to a
/// writable `EjBuffer`.
#[no_mangle]
pub unsafe extern "C" fn ej_encode_rgb(
    rgb: *const u8,
    width: usize,
    height: usize,
    quality: u8,
    out: *mut EjBuffer,
) -> EjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let img = image_from(rgb, width, height)?;
        let stream = encode_baseline(&img, &QuantTablePair::for_quality(quality)?)?;
        *out = into_buffer(stream.into_bytes());
        Ok(())
    })
}

/// Decodes a baseline JPEG into interleaved RGB.
///
/// # Safety
/// `jpeg` must point to `len` readable bytes; the remaining pointers must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn ej_decode_rgb(
    jpeg: *const u8,
    len: usize,
    out: *mut EjBuffer,
    width: *mut usize,
    height: *mut usize,
) -> EjStatus {
    guard(|| {
        if jpeg.is_null() {
            return Err(null("jpeg"));
        }
        if out.is_null() || width.is_null() || height.is_null() {
            return Err(null("output pointer"));
        }
        let img = decode_baseline(std::slice::from_raw_parts(jpeg, len))?;
        *width = img.width();
        *height = img.height();
        *out = into_buffer(img.into_data());
        Ok(())
    })
}

/// Releases a buffer returned by the library and resets it to empty.
/// Passing an empty or null buffer is a no-op.
///
/// # Safety
/// `buf` must be null or hold a buffer returned by this library that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn ej_buffer_free(buf: *mut EjBuffer) {
    if buf.is_null() || (*buf).data.is_null() {
        return;
    }
    let b = &mut *buf;
    drop(Box::from_raw(ptr::slice_from_raw_parts_mut(b.data, b.len)));
    b.data = ptr::null_mut();
    b.len = 0;
}

/// Loads a checkpoint written by the trainer.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ej_model_load(path: *const c_char, out: *mut *mut EjModel) -> EjStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(EjStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let ckpt = Checkpoint::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(EjModel { model: ckpt.model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`ej_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ej_model_free(model: *mut EjModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Encodes interleaved RGB with the model's edits and learned tables. The
/// result is an ordinary baseline JPEG.
///
/// # Safety
/// As for [`ej_encode_rgb`]; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ej_model_encode_rgb(
    model: *const EjModel,
    rgb: *const u8,
    width: usize,
    height: usize,
    out: *mut EjBuffer,
) -> EjStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let img = image_from(rgb, width, height)?;
        let enc = neural_encode(&(*model).model, &img).map_err(|e| Failure(EjStatus::Format, e.to_string()))?;
        *out = into_buffer(enc.bitstream.into_bytes());
        Ok(())
    })
}

/// Copies the exported luma and chroma tables, 64 entries each in natural
/// row-major order.
///
/// # Safety
/// `luma` and `chroma` must each point to 64 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ej_model_qtables(model: *const EjModel, luma: *mut u8, chroma: *mut u8) -> EjStatus {
    guard(|| {
        if model.is_null() || luma.is_null() || chroma.is_null() {
            return Err(null("argument"));
        }
        let t = (*model).model.qtables();
        ptr::copy_nonoverlapping(t.luma.values().as_ptr(), luma, 64);
        ptr::copy_nonoverlapping(t.chroma.values().as_ptr(), chroma, 64);
        Ok(())
    })
}
