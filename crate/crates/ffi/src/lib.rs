//! C ABI for the oodbench library.
//!
//! Objects are opaque heap handles released with their `*_free` function.
//! Every call returns an [`OodStatus`]; on failure the message is available
//! from [`oodb_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use oodbench::bench::{FittedMethod, MethodConfig};
use oodbench::detectors::{calibrate_confidence, Calibrator};
use oodbench::metrics::{evaluate, roc_auc};
use oodbench::toyspace::{generate_toy, LabeledSplits};
use oodbench::{OodError, Points, ToyKind, ToySpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Config = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodToy {
    Line = 0,
    Circle = 1,
    Haystack = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodSplit {
    Train = 0,
    Valid = 1,
    Test = 2,
}

/// Generated train / validation / test data of one toy.
pub struct OodSplits {
    spec: ToySpec,
    splits: LabeledSplits,
}

/// A fitted, calibrated detector or supervised classifier.
pub struct OodDetector {
    inner: FittedMethod,
}

/// Validation-score calibrator mapping raw OOD scores to confidences.
pub struct OodCalibrator {
    inner: Calibrator,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(OodStatus, String);

impl From<OodError> for Fail {
    fn from(e: OodError) -> Self {
        let status = match &e {
            OodError::InvalidArgument(_) => OodStatus::InvalidArgument,
            OodError::DimensionMismatch { .. } => OodStatus::DimensionMismatch,
            OodError::NotPositiveDefinite(_) | OodError::Diverged(_) | OodError::DegenerateDensity(_) => {
                OodStatus::Numerical
            }
            OodError::Config(_) => OodStatus::Config,
            OodError::Blob(_) | OodError::Io(_) | OodError::Csv(_) => OodStatus::Io,
        };
        Fail(status, e.to_string())
    }
}

fn null() -> Fail {
    Fail(OodStatus::NullPointer, "null pointer argument".into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OodStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OodStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside oodbench");
            OodStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(null)
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn points(data: *const f64, n: usize, dim: usize) -> Result<Points, Fail> {
    let len = n.checked_mul(dim).ok_or_else(|| Fail(OodStatus::InvalidArgument, "size overflow".into()))?;
    Ok(Points::new(slice(data, len)?.to_vec(), dim)?)
}

unsafe fn labels(p: *const u8, n: usize) -> Result<Vec<bool>, Fail> {
    Ok(slice(p, n)?.iter().map(|&b| b != 0).collect())
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn oodb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oodb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates the splits of a toy with default parameters.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn oodb_toy_generate(
    toy: OodToy,
    seed: u64,
    n_train: usize,
    n_valid: usize,
    n_test: usize,
    out: *mut *mut OodSplits,
) -> OodStatus {
    guard(|| {
        let kind = match toy {
            OodToy::Line => ToyKind::Line,
            OodToy::Circle => ToyKind::Circle,
            OodToy::Haystack => ToyKind::Haystack,
        };
        let spec = ToySpec::default_for(kind);
        let splits = generate_toy(&spec, seed, n_train, n_valid, n_test)?;
        put(out, OodSplits { spec, splits })
    })
}

fn split_points(s: &OodSplits, split: OodSplit) -> &Points {
    match split {
        OodSplit::Train => &s.splits.train.points,
        OodSplit::Valid => &s.splits.valid.points,
        OodSplit::Test => &s.splits.test.points,
    }
}

/// Feature dimension of the toy.
///
/// # Safety
/// `splits` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn oodb_splits_dim(splits: *const OodSplits, out: *mut usize) -> OodStatus {
    guard(|| {
        let s = handle(splits)?;
        *out.as_mut().ok_or_else(null)? = s.spec.dim();
        Ok(())
    })
}

/// Number of points in a split.
///
/// # Safety
/// `splits` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn oodb_splits_len(splits: *const OodSplits, split: OodSplit, out: *mut usize) -> OodStatus {
    guard(|| {
        let s = handle(splits)?;
        *out.as_mut().ok_or_else(null)? = split_points(s, split).len();
        Ok(())
    })
}

/// Copies a split's points, row-major, into `buf` of `len` doubles, which
/// must equal `rows * dim`.
///
/// # Safety
/// `splits` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn oodb_splits_copy_points(
    splits: *const OodSplits,
    split: OodSplit,
    buf: *mut f64,
    len: usize,
) -> OodStatus {
    guard(|| {
        let p = split_points(handle(splits)?, split);
        let src = p.as_slice();
        if len != src.len() {
            return Err(Fail(OodStatus::DimensionMismatch, format!("buffer holds {len}, need {}", src.len())));
        }
        slice_mut(buf, len)?.copy_from_slice(src);
        Ok(())
    })
}

/// Copies the test ground truth (1 = ID, 0 = OOD) into `buf` of `len` bytes.
///
/// # Safety
/// `splits` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn oodb_splits_copy_test_labels(splits: *const OodSplits, buf: *mut u8, len: usize) -> OodStatus {
    guard(|| {
        let s = handle(splits)?;
        let flags = &s.splits.test_is_id;
        if len != flags.len() {
            return Err(Fail(OodStatus::DimensionMismatch, format!("buffer holds {len}, need {}", flags.len())));
        }
        for (d, f) in slice_mut(buf, len)?.iter_mut().zip(flags) {
            *d = u8::from(*f);
        }
        Ok(())
    })
}

/// # Safety
/// `splits` must be null or a handle from [`oodb_toy_generate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oodb_splits_free(splits: *mut OodSplits) {
    if !splits.is_null() {
        drop(Box::from_raw(splits));
    }
}

/// Fits the named method (e.g. `"mahalanobis"`, `"lof"`, `"fgsm_uniform"`)
/// on the training split and calibrates it on the validation split.
///
/// # Safety
/// `splits` must be a live handle, `method` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn oodb_detector_fit(
    splits: *const OodSplits,
    method: *const c_char,
    seed: u64,
    out: *mut *mut OodDetector,
) -> OodStatus {
    guard(|| {
        let s = handle(splits)?;
        if method.is_null() {
            return Err(null());
        }
        let name = CStr::from_ptr(method)
            .to_str()
            .map_err(|_| Fail(OodStatus::InvalidArgument, "method name is not UTF-8".into()))?;
        let inner = MethodConfig::from_name(name)?.fit(&s.splits, &s.spec, seed)?;
        put(out, OodDetector { inner })
    })
}

/// ID confidences in `[0, 1]` for `n` row-major points of dimension `dim`,
/// written to `out` (`n` doubles).
///
/// # Safety
/// `detector` must be a live handle, `points` valid for `n * dim` reads and
/// `out` for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn oodb_detector_confidence(
    detector: *const OodDetector,
    data: *const f64,
    n: usize,
    dim: usize,
    out: *mut f64,
) -> OodStatus {
    guard(|| {
        let d = handle(detector)?;
        let conf = d.inner.confidence(&points(data, n, dim)?)?;
        slice_mut(out, n)?.copy_from_slice(&conf);
        Ok(())
    })
}

/// # Safety
/// `detector` must be null or a handle from [`oodb_detector_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oodb_detector_free(detector: *mut OodDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// Builds a calibrator from `n` raw validation scores (higher = more OOD).
///
/// # Safety
/// `scores` must be valid for `n` reads and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn oodb_calibrator_new(scores: *const f64, n: usize, out: *mut *mut OodCalibrator) -> OodStatus {
    guard(|| {
        let inner = Calibrator::new(slice(scores, n)?.to_vec())?;
        put(out, OodCalibrator { inner })
    })
}

/// Confidence of each raw score: the fraction of validation scores at or
/// above it.
///
/// # Safety
/// `calibrator` must be a live handle, `raw` valid for `n` reads and `out`
/// for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn oodb_calibrator_confidence(
    calibrator: *const OodCalibrator,
    raw: *const f64,
    n: usize,
    out: *mut f64,
) -> OodStatus {
    guard(|| {
        let c = handle(calibrator)?;
        let conf = calibrate_confidence(&c.inner, slice(raw, n)?);
        slice_mut(out, n)?.copy_from_slice(&conf);
        Ok(())
    })
}

/// # Safety
/// `calibrator` must be null or a handle from [`oodb_calibrator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oodb_calibrator_free(calibrator: *mut OodCalibrator) {
    if !calibrator.is_null() {
        drop(Box::from_raw(calibrator));
    }
}

/// ROC-AUC of confidences against labels (nonzero = ID).
///
/// # Safety
/// `confidences` and `is_id` must be valid for `n` reads and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn oodb_roc_auc(confidences: *const f64, is_id: *const u8, n: usize, out: *mut f64) -> OodStatus {
    guard(|| {
        let auc = roc_auc(slice(confidences, n)?, &labels(is_id, n)?)?;
        *out.as_mut().ok_or_else(null)? = auc;
        Ok(())
    })
}

/// Soft precision, F1 and ROC-AUC in one call.
///
/// # Safety
/// `confidences` and `is_id` must be valid for `n` reads; the three outputs
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn oodb_evaluate(
    confidences: *const f64,
    is_id: *const u8,
    n: usize,
    precision: *mut f64,
    f1: *mut f64,
    auc: *mut f64,
) -> OodStatus {
    guard(|| {
        if precision.is_null() || f1.is_null() || auc.is_null() {
            return Err(null());
        }
        let (p, f, a) = evaluate(slice(confidences, n)?, &labels(is_id, n)?)?;
        *precision = p;
        *f1 = f;
        *auc = a;
        Ok(())
    })
}
