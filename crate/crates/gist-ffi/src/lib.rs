//! C ABI for gist-detector inference and blending.
//!
//! Conventions: handles are opaque pointers created and destroyed by this
//! library; every fallible call returns a `GdStatus` and leaves a
//! human-readable message for `gd_last_error` on failure; out-parameters
//! are written only on `GD_STATUS_OK`. Strings cross the boundary as
//! NUL-terminated UTF-8. No call panics across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use gist::blend::{blend_context, blend_scores};
use gist::heatmap::render_html;
use gist::student::{GistWeights, StudentBundle};
use gist::text::tokenize;

/// Result code for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArg = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The operation failed; gd_last_error() describes why.
    Fail = 3,
}

/// Opaque handle to a loaded gist detector.
pub struct GdStudent {
    bundle: StudentBundle,
}

/// Opaque handle to one document's gist weights.
pub struct GdGist {
    weights: GistWeights,
    /// Token strings re-encoded once, so `gd_gist_token` pointers stay
    /// valid for the handle's lifetime.
    c_tokens: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) -> GdStatus {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(text).unwrap_or_default();
    });
    GdStatus::Fail
}

/// Run an FFI body, converting panics into `GD_STATUS_FAIL` instead of
/// unwinding across the boundary.
fn guarded(body: impl FnOnce() -> GdStatus) -> GdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => set_error("internal panic"),
    }
}

/// # Safety
/// `ptr` must be NULL or a NUL-terminated string valid for reads.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, GdStatus> {
    if ptr.is_null() {
        return Err(GdStatus::NullArg);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| GdStatus::InvalidUtf8)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load a gist-detector checkpoint. On success `*out` owns the handle;
/// release it with `gd_student_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gd_student_load(
    path: *const c_char,
    out: *mut *mut GdStudent,
) -> GdStatus {
    guarded(|| {
        if out.is_null() {
            return GdStatus::NullArg;
        }
        let path = match read_str(path) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match StudentBundle::load(Path::new(path)) {
            Ok(bundle) => {
                *out = Box::into_raw(Box::new(GdStudent { bundle }));
                GdStatus::Ok
            }
            Err(e) => set_error(e),
        }
    })
}

/// Release a handle from `gd_student_load`. NULL is a no-op.
///
/// # Safety
/// `student` must be NULL or a pointer from `gd_student_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gd_student_free(student: *mut GdStudent) {
    if !student.is_null() {
        drop(Box::from_raw(student));
    }
}

/// Tokenize `text` and run the gist detector; `*out` receives a handle to
/// the resulting per-token weight distribution.
///
/// # Safety
/// `student` must be a live handle, `text` a NUL-terminated string, and
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gd_gist_infer(
    student: *const GdStudent,
    text: *const c_char,
    out: *mut *mut GdGist,
) -> GdStatus {
    guarded(|| {
        if student.is_null() || out.is_null() {
            return GdStatus::NullArg;
        }
        let text = match read_str(text) {
            Ok(s) => s,
            Err(st) => return st,
        };
        let student = &*student;
        let mut tokens = tokenize(text);
        tokens.truncate(student.bundle.student.cfg.max_len);
        let weights =
            match student.bundle.student.gist_forward(&student.bundle.params, "ffi", &tokens) {
                Ok(w) => w,
                Err(e) => return set_error(e),
            };
        let c_tokens: Vec<CString> = weights
            .tokens
            .iter()
            .map(|t| CString::new(t.as_str()).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(GdGist { weights, c_tokens }));
        GdStatus::Ok
    })
}

/// Number of tokens (= number of weights) in a gist result. NULL gives 0.
///
/// # Safety
/// `gist` must be NULL or a live handle from `gd_gist_infer`.
#[no_mangle]
pub unsafe extern "C" fn gd_gist_len(gist: *const GdGist) -> usize {
    if gist.is_null() {
        return 0;
    }
    (*gist).weights.weights.len()
}

/// Copy the weight distribution into `out`, which must hold at least
/// `gd_gist_len` doubles (`cap` says how many it holds).
///
/// # Safety
/// `gist` must be a live handle; `out` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn gd_gist_weights(
    gist: *const GdGist,
    out: *mut f64,
    cap: usize,
) -> GdStatus {
    guarded(|| {
        if gist.is_null() || out.is_null() {
            return GdStatus::NullArg;
        }
        let w = &(*gist).weights.weights;
        if cap < w.len() {
            return set_error(format!("buffer holds {cap} doubles, need {}", w.len()));
        }
        std::ptr::copy_nonoverlapping(w.as_ptr(), out, w.len());
        GdStatus::Ok
    })
}

/// Token `i` as a NUL-terminated string owned by the handle, or NULL when
/// out of range. Valid until `gd_gist_free`.
///
/// # Safety
/// `gist` must be NULL or a live handle from `gd_gist_infer`.
#[no_mangle]
pub unsafe extern "C" fn gd_gist_token(gist: *const GdGist, i: usize) -> *const c_char {
    if gist.is_null() {
        return std::ptr::null();
    }
    let tokens = &(*gist).c_tokens;
    match tokens.get(i) {
        Some(t) => t.as_ptr(),
        None => std::ptr::null(),
    }
}

/// Render the gist result as a self-contained HTML heatmap. `*out` receives
/// a string to release with `gd_string_free`.
///
/// # Safety
/// `gist` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gd_gist_heatmap_html(
    gist: *const GdGist,
    out: *mut *mut c_char,
) -> GdStatus {
    guarded(|| {
        if gist.is_null() || out.is_null() {
            return GdStatus::NullArg;
        }
        let g = &(*gist).weights;
        let html = match render_html(&g.tokens, &g.weights) {
            Ok(h) => h,
            Err(e) => return set_error(e),
        };
        match CString::new(html) {
            Ok(s) => {
                *out = s.into_raw();
                GdStatus::Ok
            }
            Err(e) => set_error(e),
        }
    })
}

/// Release a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a string pointer returned by this library, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn gd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Release a gist handle. NULL is a no-op.
///
/// # Safety
/// `gist` must be NULL or a pointer from `gd_gist_infer` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gd_gist_free(gist: *mut GdGist) {
    if !gist.is_null() {
        drop(Box::from_raw(gist));
    }
}

/// Blend extraction-style scores with gist weights:
/// out_i = (1 - lambda) * base_i + lambda * gist_i. All three arrays hold
/// `len` doubles; `lambda` must lie in [0, 1].
///
/// # Safety
/// `base`, `gist`, and `out` must be valid for `len` reads/writes.
#[no_mangle]
pub unsafe extern "C" fn gd_blend_scores(
    base: *const f64,
    gist: *const f64,
    len: usize,
    lambda: f64,
    out: *mut f64,
) -> GdStatus {
    guarded(|| {
        if base.is_null() || gist.is_null() || out.is_null() {
            return GdStatus::NullArg;
        }
        let base = std::slice::from_raw_parts(base, len);
        let gist = std::slice::from_raw_parts(gist, len);
        match blend_scores(base, gist, lambda) {
            Ok(v) => {
                std::ptr::copy_nonoverlapping(v.as_ptr(), out, len);
                GdStatus::Ok
            }
            Err(e) => set_error(e),
        }
    })
}

/// Blend a context vector with the gist-weighted sum of per-position
/// representations: out = (1 - lambda) * v + lambda * sum_i w_i * reps_i.
/// `v` and `out` hold `dim` doubles; `weights` holds `m`; `reps` is m*dim
/// doubles, row-major.
///
/// # Safety
/// All pointers must be valid for the lengths described above.
#[no_mangle]
pub unsafe extern "C" fn gd_blend_context(
    v: *const f64,
    dim: usize,
    weights: *const f64,
    m: usize,
    reps: *const f64,
    lambda: f64,
    out: *mut f64,
) -> GdStatus {
    guarded(|| {
        if v.is_null() || weights.is_null() || reps.is_null() || out.is_null() {
            return GdStatus::NullArg;
        }
        let v = std::slice::from_raw_parts(v, dim);
        let weights = std::slice::from_raw_parts(weights, m);
        let flat = std::slice::from_raw_parts(reps, m * dim);
        let rows: Vec<Vec<f64>> = flat.chunks(dim).map(|c| c.to_vec()).collect();
        match blend_context(v, weights, &rows, lambda) {
            Ok(res) => {
                std::ptr::copy_nonoverlapping(res.as_ptr(), out, dim);
                GdStatus::Ok
            }
            Err(e) => set_error(e),
        }
    })
}
