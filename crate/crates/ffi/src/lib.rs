//! C ABI for flowseg.
//!
//! Rasters, flow fields and confusion matrices cross the boundary as opaque
//! handles created by `*_new` / `*_read` functions and released with the
//! matching `*_free`. Every fallible call returns an [`FsStatus`]; on
//! failure [`fs_last_error`] describes the problem for the calling thread.
//! Output handles are written only on success.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use libc::{c_char, size_t};

use flowseg::damath::{rcs_distribution, ClassFrequencies};
use flowseg::io::{read_flo, read_label_png, read_pfm, write_flo, write_label_png, write_pfm};
use flowseg::metrics::ConfusionMatrix;
use flowseg::raster::{ClassSpace, Dims, FlowField, LabelMap, ScalarPlane};
use flowseg::refine::{refine_consistency, refine_max_confidence, refine_oracle, refine_warp_frame, retained_fraction};
use flowseg::warp::propagate_labels;
use flowseg::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidLabel = 3,
    Shape = 4,
    Format = 5,
    Unsupported = 6,
    Length = 7,
    Data = 8,
    Io = 9,
    /// The requested quantity is undefined, e.g. a mean over no classes.
    Undefined = 10,
    Panic = 11,
    Other = 12,
}

/// Label map handle.
pub struct FsLabelMap(LabelMap);

/// Optical flow handle.
pub struct FsFlow(FlowField);

/// Float plane handle, used for per-pixel confidences.
pub struct FsPlane(ScalarPlane);

/// Confusion matrix handle.
pub struct FsConfusion(ConfusionMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> FsStatus {
    match err.root() {
        Error::InvalidLabel { .. } => FsStatus::InvalidLabel,
        Error::Shape(_) => FsStatus::Shape,
        Error::Format(_) | Error::Parse { .. } | Error::Json(_) => FsStatus::Format,
        Error::UnsupportedFormat(_) => FsStatus::Unsupported,
        Error::Length { .. } => FsStatus::Length,
        Error::Data(_) => FsStatus::Data,
        Error::Io(_) => FsStatus::Io,
        Error::ClassSpace(_) | Error::Parameter(_) | Error::MissingInput(_) | Error::Config(_) => {
            FsStatus::InvalidArgument
        }
        Error::EmptySource | Error::UndefinedLoss => FsStatus::Undefined,
        _ => FsStatus::Other,
    }
}

struct Fail(FsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FsStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    // SAFETY: the caller passes a live handle or null.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: size_t, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    // SAFETY: the caller passes a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(FsStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: `out` is non-null and writable per the caller's contract.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn put_value<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: as above.
    unsafe { *out = value };
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: `p` came from `Box::into_raw` in this crate.
        drop(unsafe { Box::from_raw(p) });
    }
}

fn class_space(num_classes: u8) -> Result<ClassSpace, Fail> {
    Ok(ClassSpace::new(num_classes)?)
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a label map from `width * height` row-major bytes.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_label_map_new(
    width: size_t,
    height: size_t,
    data: *const u8,
    len: size_t,
    num_classes: u8,
    out: *mut *mut FsLabelMap,
) -> FsStatus {
    guard(|| {
        let data = unsafe { slice(data, len, "data") }?.to_vec();
        let map = LabelMap::new(width, height, data, class_space(num_classes)?)?;
        unsafe { put(out, FsLabelMap(map)) }
    })
}

/// Reads an 8-bit grayscale PNG label map.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_label_map_read_png(
    path: *const c_char,
    num_classes: u8,
    out: *mut *mut FsLabelMap,
) -> FsStatus {
    guard(|| {
        let map = read_label_png(unsafe { self::path(path) }?, class_space(num_classes)?)?;
        unsafe { put(out, FsLabelMap(map)) }
    })
}

/// # Safety
/// `map` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fs_label_map_write_png(map: *const FsLabelMap, path: *const c_char) -> FsStatus {
    guard(|| {
        let map = unsafe { borrow(map, "map") }?;
        Ok(write_label_png(&map.0, unsafe { self::path(path) }?)?)
    })
}

/// Width, height and a borrowed pointer to the row-major labels. The data
/// pointer is valid until the handle is freed.
///
/// # Safety
/// `map` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn fs_label_map_view(
    map: *const FsLabelMap,
    width: *mut size_t,
    height: *mut size_t,
    data: *mut *const u8,
) -> FsStatus {
    guard(|| {
        let map = unsafe { borrow(map, "map") }?;
        unsafe {
            if !width.is_null() {
                *width = map.0.width();
            }
            if !height.is_null() {
                *height = map.0.height();
            }
            if !data.is_null() {
                *data = map.0.data().as_ptr();
            }
        }
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_label_map_free(map: *mut FsLabelMap) {
    unsafe { free(map) }
}

/// Creates a flow field from `len = width * height` displacements per axis.
///
/// # Safety
/// `dx` and `dy` must each point to `len` floats and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_flow_new(
    width: size_t,
    height: size_t,
    dx: *const f32,
    dy: *const f32,
    len: size_t,
    out: *mut *mut FsFlow,
) -> FsStatus {
    guard(|| {
        let dx = unsafe { slice(dx, len, "dx") }?.to_vec();
        let dy = unsafe { slice(dy, len, "dy") }?.to_vec();
        let flow = FlowField::new(width, height, dx, dy)?;
        unsafe { put(out, FsFlow(flow)) }
    })
}

/// Reads a Middlebury `.flo` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_flow_read(path: *const c_char, out: *mut *mut FsFlow) -> FsStatus {
    guard(|| {
        let flow = read_flo(unsafe { self::path(path) }?)?;
        unsafe { put(out, FsFlow(flow)) }
    })
}

/// # Safety
/// `flow` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fs_flow_write(flow: *const FsFlow, path: *const c_char) -> FsStatus {
    guard(|| {
        let flow = unsafe { borrow(flow, "flow") }?;
        Ok(write_flo(&flow.0, unsafe { self::path(path) }?)?)
    })
}

/// # Safety
/// `flow` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_flow_free(flow: *mut FsFlow) {
    unsafe { free(flow) }
}

/// # Safety
/// `data` must point to `len` floats and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_plane_new(
    width: size_t,
    height: size_t,
    data: *const f32,
    len: size_t,
    out: *mut *mut FsPlane,
) -> FsStatus {
    guard(|| {
        let data = unsafe { slice(data, len, "data") }?.to_vec();
        let plane = ScalarPlane::new(width, height, data)?;
        unsafe { put(out, FsPlane(plane)) }
    })
}

/// Reads a grayscale little-endian PFM file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_plane_read_pfm(path: *const c_char, out: *mut *mut FsPlane) -> FsStatus {
    guard(|| {
        let plane = read_pfm(unsafe { self::path(path) }?)?;
        unsafe { put(out, FsPlane(plane)) }
    })
}

/// # Safety
/// `plane` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fs_plane_write_pfm(plane: *const FsPlane, path: *const c_char) -> FsStatus {
    guard(|| {
        let plane = unsafe { borrow(plane, "plane") }?;
        write_pfm(&plane.0, unsafe { self::path(path) }?)?;
        Ok(())
    })
}

/// # Safety
/// `plane` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_plane_free(plane: *mut FsPlane) {
    unsafe { free(plane) }
}

/// Warps `labels` with nearest sampling. When `validity` is non-null it
/// receives one byte per pixel, 1 where the sample stayed in bounds.
///
/// # Safety
/// Handles must be live; `validity` must be null or hold `width * height`
/// writable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_propagate_labels(
    labels: *const FsLabelMap,
    flow: *const FsFlow,
    out: *mut *mut FsLabelMap,
    validity: *mut u8,
) -> FsStatus {
    guard(|| {
        let labels = unsafe { borrow(labels, "labels") }?;
        let flow = unsafe { borrow(flow, "flow") }?;
        let warped = propagate_labels(&labels.0, &flow.0)?;
        if !validity.is_null() {
            for (i, &v) in warped.validity.data().iter().enumerate() {
                // SAFETY: the caller provides `width * height` bytes.
                unsafe { *validity.add(i) = u8::from(v) };
            }
        }
        unsafe { put(out, FsLabelMap(warped.payload)) }
    })
}

/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_refine_consistency(
    pl_t: *const FsLabelMap,
    pl_tpk: *const FsLabelMap,
    flow: *const FsFlow,
    out: *mut *mut FsLabelMap,
) -> FsStatus {
    guard(|| {
        let refined = refine_consistency(
            &unsafe { borrow(pl_t, "pl_t") }?.0,
            &unsafe { borrow(pl_tpk, "pl_tpk") }?.0,
            &unsafe { borrow(flow, "flow") }?.0,
        )?;
        unsafe { put(out, FsLabelMap(refined)) }
    })
}

/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_refine_max_confidence(
    pl_t: *const FsLabelMap,
    conf_t: *const FsPlane,
    pl_tpk: *const FsLabelMap,
    conf_tpk: *const FsPlane,
    flow: *const FsFlow,
    out: *mut *mut FsLabelMap,
) -> FsStatus {
    guard(|| {
        let refined = refine_max_confidence(
            &unsafe { borrow(pl_t, "pl_t") }?.0,
            &unsafe { borrow(conf_t, "conf_t") }?.0,
            &unsafe { borrow(pl_tpk, "pl_tpk") }?.0,
            &unsafe { borrow(conf_tpk, "conf_tpk") }?.0,
            &unsafe { borrow(flow, "flow") }?.0,
        )?;
        unsafe { put(out, FsLabelMap(refined)) }
    })
}

/// Warps the neighbouring labels onto frame `t`; pass forward or backward
/// flow to choose the direction.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_refine_warp_frame(
    pl_tpk: *const FsLabelMap,
    flow: *const FsFlow,
    out: *mut *mut FsLabelMap,
) -> FsStatus {
    guard(|| {
        let refined = refine_warp_frame(&unsafe { borrow(pl_tpk, "pl_tpk") }?.0, &unsafe { borrow(flow, "flow") }?.0)?;
        unsafe { put(out, FsLabelMap(refined)) }
    })
}

/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_refine_oracle(
    pl_t: *const FsLabelMap,
    gt_t: *const FsLabelMap,
    out: *mut *mut FsLabelMap,
) -> FsStatus {
    guard(|| {
        let refined = refine_oracle(&unsafe { borrow(pl_t, "pl_t") }?.0, &unsafe { borrow(gt_t, "gt_t") }?.0)?;
        unsafe { put(out, FsLabelMap(refined)) }
    })
}

/// Fraction of pixels that are not ignore.
///
/// # Safety
/// `map` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_retained_fraction(map: *const FsLabelMap, out: *mut f64) -> FsStatus {
    guard(|| {
        let map = unsafe { borrow(map, "map") }?;
        unsafe { put_value(out, retained_fraction(&map.0)) }
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_confusion_new(num_classes: u8, out: *mut *mut FsConfusion) -> FsStatus {
    guard(|| unsafe { put(out, FsConfusion(ConfusionMatrix::new(class_space(num_classes)?))) })
}

/// Adds the pixels of `pred` against `gt` to `acc`.
///
/// # Safety
/// Handles must be live and `acc` not aliased by another call.
#[no_mangle]
pub unsafe extern "C" fn fs_confusion_accumulate(
    acc: *mut FsConfusion,
    pred: *const FsLabelMap,
    gt: *const FsLabelMap,
) -> FsStatus {
    guard(|| {
        // SAFETY: the caller passes a live, unaliased handle.
        let acc = unsafe { acc.as_mut() }.ok_or_else(|| null("acc"))?;
        let pred = unsafe { borrow(pred, "pred") }?;
        let gt = unsafe { borrow(gt, "gt") }?;
        Ok(acc.0.accumulate(&pred.0, &gt.0)?)
    })
}

/// A new matrix holding the sum of `a` and `b`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_confusion_merge(
    a: *const FsConfusion,
    b: *const FsConfusion,
    out: *mut *mut FsConfusion,
) -> FsStatus {
    guard(|| {
        let merged = unsafe { borrow(a, "a") }?.0.merge(&unsafe { borrow(b, "b") }?.0)?;
        unsafe { put(out, FsConfusion(merged)) }
    })
}

/// Mean IoU and class-average accuracy, in percent, over the `n` classes in
/// `universe`, or over every class when `universe` is null. Classes with an
/// empty union are skipped. Returns `Undefined` when no class is scored.
///
/// # Safety
/// `acc` must be live; `universe` null or `n` readable bytes; `miou` and
/// `class_avg_acc` writable or null.
#[no_mangle]
pub unsafe extern "C" fn fs_confusion_miou(
    acc: *const FsConfusion,
    universe: *const u8,
    n: size_t,
    miou: *mut f64,
    class_avg_acc: *mut f64,
) -> FsStatus {
    guard(|| {
        let acc = unsafe { borrow(acc, "acc") }?;
        let report = if universe.is_null() {
            acc.0.summarize()
        } else {
            acc.0.summarize_over(unsafe { slice(universe, n, "universe") }?)
        };
        let m = report
            .miou
            .ok_or_else(|| Fail(FsStatus::Undefined, "no class has a nonempty union".into()))?;
        unsafe {
            if !miou.is_null() {
                *miou = m;
            }
            if !class_avg_acc.is_null() {
                *class_avg_acc = report.class_avg_acc.unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `acc` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_confusion_free(acc: *mut FsConfusion) {
    unsafe { free(acc) }
}

/// Rare-class sampling probabilities for `n` class frequencies, written to
/// `out`.
///
/// # Safety
/// `freqs` must hold `n` readable doubles and `out` `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fs_rcs_distribution(
    freqs: *const f64,
    n: size_t,
    temperature: f64,
    out: *mut f64,
) -> FsStatus {
    guard(|| {
        let freqs = unsafe { slice(freqs, n, "freqs") }?.to_vec();
        let probs = rcs_distribution(&ClassFrequencies { freqs, temperature })?;
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: the caller provides `n` writable doubles.
        unsafe { ptr::copy_nonoverlapping(probs.as_ptr(), out, probs.len()) };
        Ok(())
    })
}
