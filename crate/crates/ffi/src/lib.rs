//! C ABI over `fuse-core`.
//!
//! Handles are opaque pointers created by `*_open`/`*_new` and released by
//! the matching `*_free`. Every fallible call returns a [`FuseStatus`]; the
//! message for the last failure on the calling thread is available through
//! [`fuse_last_error_message`].

use fuse_core::checkpoint::{Checkpoint, CheckpointError};
use fuse_core::pipeline::{score_image, score_normalized, PipelineError};
use fuse_core::preprocess::{standardize, RawImage};
use fuse_core::semantic::{load_encoder, EncoderHandle, SemanticError};
use fuse_core::spectral::{extract_spectral, ReductionMode};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuseStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    CorruptCheckpoint = 4,
    ConfigMismatch = 5,
    ImageDecode = 6,
    Encoder = 7,
    BufferTooSmall = 8,
    Runtime = 9,
}

/// Spectral reduction selector for [`fuse_spectral_features`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuseReduction {
    AxisProfiles = 0,
    ScalarStats = 1,
}

/// A loaded checkpoint plus its encoder.
pub struct FuseDetector {
    checkpoint: Checkpoint,
    encoder: EncoderHandle,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: FuseStatus, msg: impl ToString) -> FuseStatus {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
    status
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of_pipeline(e: &PipelineError) -> FuseStatus {
    match e {
        PipelineError::Read { .. } => FuseStatus::Io,
        PipelineError::Image { .. } | PipelineError::Spectral { .. } => FuseStatus::ImageDecode,
        PipelineError::Semantic { .. } => FuseStatus::Encoder,
        _ => FuseStatus::Runtime,
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, FuseStatus> {
    if p.is_null() {
        return Err(fail(FuseStatus::NullArgument, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(FuseStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn raw_image_arg(data: *const u8, width: usize, height: usize, channels: usize) -> Result<RawImage, FuseStatus> {
    if data.is_null() {
        return Err(fail(FuseStatus::NullArgument, "pixel buffer is null"));
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| fail(FuseStatus::InvalidArgument, "image dimensions overflow"))?;
    let bytes = std::slice::from_raw_parts(data, len).to_vec();
    RawImage::new(width, height, channels, bytes).map_err(|e| fail(FuseStatus::InvalidArgument, e))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fuse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn fuse_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a checkpoint and the encoder recorded in it.
///
/// # Safety
/// `checkpoint_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fuse_detector_open(checkpoint_path: *const c_char, out: *mut *mut FuseDetector) -> FuseStatus {
    clear_error();
    if out.is_null() {
        return fail(FuseStatus::NullArgument, "out is null");
    }
    *out = ptr::null_mut();
    let path = match path_arg(checkpoint_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let checkpoint = match Checkpoint::load(&path) {
        Ok(c) => c,
        Err(e) => {
            let status = match e {
                CheckpointError::Io(_) => FuseStatus::Io,
                CheckpointError::ConfigHashMismatch { .. } => FuseStatus::ConfigMismatch,
                _ => FuseStatus::CorruptCheckpoint,
            };
            return fail(status, format!("{}: {e}", path.display()));
        }
    };
    let mut enc_cfg = checkpoint.config.encoder.clone();
    if let Some(p) = std::env::var_os(fuse_core::config::MODEL_PATH_ENV) {
        enc_cfg.model_path = Some(PathBuf::from(p));
    }
    let encoder = match load_encoder(&enc_cfg) {
        Ok(h) => h,
        Err(e @ SemanticError::ModelNotFound(_)) => return fail(FuseStatus::Io, e),
        Err(e) => return fail(FuseStatus::Encoder, e),
    };
    *out = Box::into_raw(Box::new(FuseDetector { checkpoint, encoder }));
    FuseStatus::Ok
}

/// Releases a detector. NULL is ignored.
///
/// # Safety
/// `det` must come from [`fuse_detector_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fuse_detector_free(det: *mut FuseDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Length of the fused feature vector the detector's classifier expects.
///
/// # Safety
/// `det` must be a live detector or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn fuse_detector_input_dim(det: *const FuseDetector) -> usize {
    det.as_ref().map_or(0, |d| d.checkpoint.params.input_dim())
}

/// Scores a PNG/JPEG file: probability in `[0, 1]` that it is generated.
///
/// # Safety
/// `det` must be live, `path` NUL-terminated, `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn fuse_detector_score_file(det: *const FuseDetector, path: *const c_char, out_score: *mut f64) -> FuseStatus {
    clear_error();
    let (Some(det), false) = (det.as_ref(), out_score.is_null()) else {
        return fail(FuseStatus::NullArgument, "detector or out_score is null");
    };
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match score_image(&path, &det.checkpoint, &det.encoder) {
        Ok(s) => {
            *out_score = s;
            FuseStatus::Ok
        }
        Err(e) => fail(status_of_pipeline(&e), e),
    }
}

/// Scores an 8-bit image held in memory (row-major, interleaved, 1 or 3
/// channels). The image is resized to the model resolution first.
///
/// # Safety
/// `data` must hold `width * height * channels` bytes; `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn fuse_detector_score_pixels(
    det: *const FuseDetector,
    data: *const u8,
    width: usize,
    height: usize,
    channels: usize,
    out_score: *mut f64,
) -> FuseStatus {
    clear_error();
    let (Some(det), false) = (det.as_ref(), out_score.is_null()) else {
        return fail(FuseStatus::NullArgument, "detector or out_score is null");
    };
    let raw = match raw_image_arg(data, width, height, channels) {
        Ok(r) => r,
        Err(s) => return s,
    };
    match score_normalized(&standardize(&raw), &det.checkpoint, &det.encoder) {
        Ok(s) => {
            *out_score = s;
            FuseStatus::Ok
        }
        Err(e) => fail(status_of_pipeline(&e), e),
    }
}

/// Spectral feature vector of an 8-bit image after standardization.
/// `*out_len` receives the number of values; when `out` is NULL or
/// `capacity` is too small only the length is reported.
///
/// # Safety
/// `data` must hold `width * height * channels` bytes; `out` (if not NULL)
/// must have room for `capacity` doubles; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fuse_spectral_features(
    data: *const u8,
    width: usize,
    height: usize,
    channels: usize,
    reduction: FuseReduction,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> FuseStatus {
    clear_error();
    if out_len.is_null() {
        return fail(FuseStatus::NullArgument, "out_len is null");
    }
    let raw = match raw_image_arg(data, width, height, channels) {
        Ok(r) => r,
        Err(s) => return s,
    };
    let mode = match reduction {
        FuseReduction::AxisProfiles => ReductionMode::AxisProfiles,
        FuseReduction::ScalarStats => ReductionMode::ScalarStats,
    };
    let features = match extract_spectral(&standardize(&raw), mode) {
        Ok(f) => f,
        Err(e) => return fail(FuseStatus::ImageDecode, e),
    };
    *out_len = features.len();
    if out.is_null() || capacity < features.len() {
        return fail(FuseStatus::BufferTooSmall, format!("need room for {} values", features.len()));
    }
    ptr::copy_nonoverlapping(features.values.as_ptr(), out, features.len());
    FuseStatus::Ok
}
