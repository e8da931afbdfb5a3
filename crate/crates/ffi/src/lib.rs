//! C ABI over the participant-side pieces of `grpcoll`: projection keys,
//! Laplace noise, variance and condition-number helpers, and classification
//! with a saved model.
//!
//! Every fallible function returns a [`GrpStatus`]; on failure a message is
//! kept per thread and can be read with [`grp_last_error_message`]. Handles
//! are opaque and owned by the caller, who releases them with the matching
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use grpcoll::attack::predicted_variance;
use grpcoll::linalg::Matrix;
use grpcoll::nn::{load_model, NetworkModel};
use grpcoll::privacy::{noisify, NoiseBudget};
use grpcoll::projection::{
    compression_ratio, condition_number, export_matrix, generate_projection, import_matrix,
    project, ProjectionKey,
};
use grpcoll::rng::Rng64;
use grpcoll::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidDimension = 3,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 4,
    /// Malformed key or model blob.
    Format = 5,
    /// Degenerate matrix or unachievable numeric request.
    Numeric = 6,
    Panic = 7,
    Internal = 8,
}

/// A participant's projection key.
pub struct GrpKey(ProjectionKey);

/// A trained classifier loaded from a `GRPN` checkpoint.
pub struct GrpModel(NetworkModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(GrpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidDimension(_) | Error::ShapeMismatch { .. } => GrpStatus::InvalidDimension,
            Error::BadMagic { .. } | Error::TruncatedFile(_) | Error::Format(_) => {
                GrpStatus::Format
            }
            Error::DegenerateMatrix(_) | Error::UnachievableCondition { .. } => GrpStatus::Numeric,
            Error::InvalidScale(_)
            | Error::InvalidBudget(_)
            | Error::InvalidBounds(_)
            | Error::Config(_) => GrpStatus::InvalidArgument,
            _ => GrpStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GrpStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and a message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GrpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GrpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside grpcoll".into());
            GrpStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn key_ref<'a>(key: *const GrpKey) -> Result<&'a ProjectionKey, Failure> {
    key.as_ref().map(|k| &k.0).ok_or_else(|| null("key"))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn copy_exact(dst: &mut [f64], src: &[f64]) -> Result<(), Failure> {
    if dst.len() != src.len() {
        return Err(Failure(
            GrpStatus::InvalidDimension,
            format!(
                "output holds {} values, result has {}",
                dst.len(),
                src.len()
            ),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn grp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, excluding the
/// terminating NUL; 0 if there is none.
#[no_mangle]
pub extern "C" fn grp_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |m| m.as_bytes().len()))
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `cap - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn grp_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let msg = e.as_ref().map_or(&[][..], |m| m.as_bytes());
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Draws a `k x d` Gaussian key scaled by `1/sqrt(k)`.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn grp_key_generate(
    k: usize,
    d: usize,
    seed: u64,
    out: *mut *mut GrpKey,
) -> GrpStatus {
    guard(|| {
        let key = generate_projection(k, d, seed)?;
        put(out, Box::into_raw(Box::new(GrpKey(key))), "out")
    })
}

/// Releases a key. Null is ignored.
///
/// # Safety
/// `key` must be null or come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn grp_key_free(key: *mut GrpKey) {
    if !key.is_null() {
        drop(Box::from_raw(key));
    }
}

/// Writes the key's output and input dimensions.
///
/// # Safety
/// `key` must be a live handle; `k` and `d` valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn grp_key_dims(
    key: *const GrpKey,
    k: *mut usize,
    d: *mut usize,
) -> GrpStatus {
    guard(|| {
        let key = key_ref(key)?;
        put(k, key.k(), "k")?;
        put(d, key.d(), "d")
    })
}

/// `d / k`, or NaN for a null key.
///
/// # Safety
/// `key` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn grp_key_compression_ratio(key: *const GrpKey) -> f64 {
    key.as_ref().map_or(f64::NAN, |k| compression_ratio(&k.0))
}

/// Projects `x` (length `d`) into `out` (length `k`).
///
/// # Safety
/// `x` and `out` must be valid for `x_len` and `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn grp_key_project(
    key: *const GrpKey,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> GrpStatus {
    guard(|| {
        let key = key_ref(key)?;
        let y = project(key, input(x, x_len, "x")?)?;
        copy_exact(output(out, out_len, "out")?, &y)
    })
}

/// Serializes the key matrix in the `GRPM` format. `written` receives the
/// blob length; if `buf` is null or `cap` is smaller, nothing is copied and
/// `GRP_STATUS_BUFFER_TOO_SMALL` is returned (null `buf` with a valid
/// `written` is the way to query the size).
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes; `written` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn grp_key_export(
    key: *const GrpKey,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> GrpStatus {
    guard(|| {
        let blob = export_matrix(key_ref(key)?)?;
        put(written, blob.len(), "written")?;
        if buf.is_null() || cap < blob.len() {
            return Err(Failure(
                GrpStatus::BufferTooSmall,
                format!("key blob needs {} bytes, buffer has {cap}", blob.len()),
            ));
        }
        ptr::copy_nonoverlapping(blob.as_ptr(), buf, blob.len());
        Ok(())
    })
}

/// Parses a `GRPM` blob. `scaled` selects whether projection applies the
/// `1/sqrt(k)` factor, which the blob does not record.
///
/// # Safety
/// `bytes` must be valid for `len` bytes; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn grp_key_import(
    bytes: *const u8,
    len: usize,
    scaled: bool,
    out: *mut *mut GrpKey,
) -> GrpStatus {
    guard(|| {
        let key = import_matrix(input(bytes, len, "bytes")?, scaled)?;
        put(out, Box::into_raw(Box::new(GrpKey(key))), "out")
    })
}

/// Adds i.i.d. Laplace noise of scale `sensitivity / epsilon` to `x`,
/// writing `len` values to `out`. The noise stream is determined by `seed`.
///
/// # Safety
/// `x` and `out` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn grp_noisify(
    x: *const f64,
    len: usize,
    epsilon: f64,
    sensitivity: f64,
    seed: u64,
    out: *mut f64,
) -> GrpStatus {
    guard(|| {
        let budget = NoiseBudget::new(epsilon, sensitivity)?;
        let noisy = noisify(input(x, len, "x")?, &budget, &mut Rng64::new(seed));
        copy_exact(output(out, len, "out")?, &noisy)
    })
}

/// Per-element variance `(||x||^2 + x_i^2) / k` of the transpose
/// reconstruction of `x` from a `k`-row key.
///
/// # Safety
/// `x` and `out` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn grp_predicted_variance(
    x: *const f64,
    len: usize,
    k: usize,
    out: *mut f64,
) -> GrpStatus {
    guard(|| {
        let v = predicted_variance(input(x, len, "x")?, k)?;
        copy_exact(output(out, len, "out")?, &v)
    })
}

/// Frobenius condition number `||M||_F ||M+||_F` of a row-major matrix.
///
/// # Safety
/// `m` must be valid for `rows * cols` doubles; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn grp_condition_number(
    m: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> GrpStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(GrpStatus::InvalidDimension, "rows * cols overflows".into()))?;
        let matrix = Matrix::from_row_major(rows, cols, input(m, len, "m")?.to_vec())?;
        put(out, condition_number(&matrix)?.condition_number, "out")
    })
}

/// Loads a `GRPN` checkpoint.
///
/// # Safety
/// `bytes` must be valid for `len` bytes; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn grp_model_load(
    bytes: *const u8,
    len: usize,
    out: *mut *mut GrpModel,
) -> GrpStatus {
    guard(|| {
        let model = load_model(input(bytes, len, "bytes")?)?;
        put(out, Box::into_raw(Box::new(GrpModel(model))), "out")
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn grp_model_free(model: *mut GrpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the model's input dimension and class count.
///
/// # Safety
/// `model` must be a live handle; `dim` and `classes` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn grp_model_shape(
    model: *const GrpModel,
    dim: *mut usize,
    classes: *mut usize,
) -> GrpStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        put(dim, m.input_dim(), "dim")?;
        put(classes, m.class_count(), "classes")
    })
}

/// Classifies one (already obfuscated) sample. `probs` receives the class
/// probabilities and may be null when `probs_len` is 0.
///
/// # Safety
/// `x` must be valid for `x_len` doubles, `probs` for `probs_len`, `class`
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn grp_model_classify(
    model: *const GrpModel,
    x: *const f64,
    x_len: usize,
    class: *mut usize,
    probs: *mut f64,
    probs_len: usize,
) -> GrpStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let (label, p) = m.classify(input(x, x_len, "x")?)?;
        if probs_len > 0 {
            copy_exact(output(probs, probs_len, "probs")?, &p)?;
        }
        put(class, label, "class")
    })
}
