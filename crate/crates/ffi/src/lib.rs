//! C interface to the sheaf core.
//!
//! Sheaves cross the boundary as opaque `QsSheaf` handles created by
//! `qs_sheaf_from_json` or `qs_sheaf_from_maps` and released with
//! `qs_sheaf_free`. Every function returns a `QsStatus`; on failure the
//! message is kept per thread and read back with `qs_last_error`. Panics are
//! caught at the boundary and reported as `QS_STATUS_PANIC`.
//!
//! Matrices are exchanged row-major. Output buffers are caller-owned and
//! sized by the caller; a short buffer yields `QS_STATUS_BUFFER_TOO_SMALL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use quiver_sheaf::diffusion::{euler_diffuse, StepSize};
use quiver_sheaf::harmonic::kernel_basis;
use quiver_sheaf::sheaf::row_major;
use quiver_sheaf::stability::{cent_mm, project_theta, theta_mm};
use quiver_sheaf::{CellularSheaf, DimensionVector, Error, Graph};

/// Result code of every `qs_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Structural = 10,
    Conditioning = 11,
    Numeric = 12,
    Precondition = 13,
    Parse = 14,
    Io = 15,
    Panic = 99,
}

/// Opaque sheaf handle.
pub struct QsSheaf {
    inner: CellularSheaf,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> QsStatus {
    match e {
        Error::Structural(_) => QsStatus::Structural,
        Error::Conditioning(_) => QsStatus::Conditioning,
        Error::Numeric(_) => QsStatus::Numeric,
        Error::Precondition(_) | Error::Generation(_) => QsStatus::Precondition,
        Error::Parse { .. } | Error::Json(_) => QsStatus::Parse,
        Error::Io { .. } => QsStatus::Io,
    }
}

/// Failure inside a call: a status plus the message stored for `qs_last_error`.
struct Fail(QsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(QsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            QsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            QsStatus::Panic
        }
    }
}

unsafe fn sheaf_ref<'a>(ptr: *const QsSheaf) -> Result<&'a CellularSheaf, Fail> {
    ptr.as_ref().map(|s| &s.inner).ok_or_else(|| null("sheaf"))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn write_out<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    *ptr = value;
    Ok(())
}

fn need(len: usize, want: usize, what: &str) -> Result<(), Fail> {
    if len < want {
        return Err(Fail(
            QsStatus::BufferTooSmall,
            format!("{what} holds {len} values, {want} needed"),
        ));
    }
    Ok(())
}

unsafe fn publish(out: *mut *mut QsSheaf, sheaf: CellularSheaf) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(QsSheaf { inner: sheaf }));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to fit) into `buf` and returns the full message length in bytes, excluding
/// the terminator. Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qs_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Parses a sheaf from its JSON form (`graph`, `d_v`, `d_e`, `maps`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_from_json(json: *const c_char, out: *mut *mut QsSheaf) -> QsStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(QsStatus::InvalidUtf8, e.to_string()))?;
        publish(out, CellularSheaf::from_json(text)?)
    })
}

/// Builds a sheaf from raw arrays.
///
/// `edges` holds `2 * n_edges` vertex indices, two per edge. The lower index
/// of each pair is the tail whatever the order given.
/// `vertex_dims` has `n_vertices` entries, `edge_dims` has `n_edges`.
/// `maps` concatenates the row-major restriction maps in incidence order
/// (edge 0 tail, edge 0 head, edge 1 tail and so on); each is `d_e × d_v`.
///
/// # Safety
/// Every pointer must reference the stated number of readable elements;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_from_maps(
    n_vertices: usize,
    edges: *const usize,
    n_edges: usize,
    vertex_dims: *const usize,
    edge_dims: *const usize,
    maps: *const f64,
    maps_len: usize,
    out: *mut *mut QsSheaf,
) -> QsStatus {
    guard(|| {
        let flat = slice(edges, 2 * n_edges, "edges")?;
        let pairs: Vec<(usize, usize)> = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let graph = Graph::with_indices(n_vertices, &pairs)?;
        let dims = DimensionVector::new(
            slice(vertex_dims, n_vertices, "vertex_dims")?.to_vec(),
            slice(edge_dims, n_edges, "edge_dims")?.to_vec(),
        )?;
        let values = slice(maps, maps_len, "maps")?;
        let mut offset = 0;
        let mut mats = Vec::with_capacity(2 * n_edges);
        for i in 0..2 * n_edges {
            let (rows, cols) = (dims.edge_dim(i / 2), dims.vertex_dim(graph.incidence_vertex(i)));
            let end = offset + rows * cols;
            if end > values.len() {
                return Err(Fail(
                    QsStatus::Structural,
                    format!("maps holds {} values, incidence {i} needs up to {end}", values.len()),
                ));
            }
            mats.push(DMatrix::from_row_slice(rows, cols, &values[offset..end]));
            offset = end;
        }
        if offset != values.len() {
            return Err(Fail(
                QsStatus::Structural,
                format!("maps holds {} values, the dims use {offset}", values.len()),
            ));
        }
        publish(out, CellularSheaf::new(graph, dims, mats)?)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sheaf` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_free(sheaf: *mut QsSheaf) {
    if !sheaf.is_null() {
        drop(Box::from_raw(sheaf));
    }
}

/// Writes the sheaf JSON (NUL-terminated) into `buf` and its length in bytes,
/// excluding the terminator, into `written`. With a short buffer the status
/// is `QS_STATUS_BUFFER_TOO_SMALL` and `written` still receives the length.
///
/// # Safety
/// `sheaf` must be a live handle; `buf` must be null or hold `len` bytes;
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_to_json(
    sheaf: *const QsSheaf,
    buf: *mut c_char,
    len: usize,
    written: *mut usize,
) -> QsStatus {
    guard(|| {
        let text = sheaf_ref(sheaf)?.to_json();
        write_out(written, text.len(), "written")?;
        need(len, text.len() + 1, "buf")?;
        let dst = slice_mut(buf.cast::<u8>(), len, "buf")?;
        dst[..text.len()].copy_from_slice(text.as_bytes());
        dst[text.len()] = 0;
        Ok(())
    })
}

/// Counts: vertices, edges, `N₀` (total vertex stalk dimension) and `N₁`.
///
/// # Safety
/// `sheaf` must be a live handle; each output must be null (skipped) or writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_shape(
    sheaf: *const QsSheaf,
    n_vertices: *mut usize,
    n_edges: *mut usize,
    n0: *mut usize,
    n1: *mut usize,
) -> QsStatus {
    guard(|| {
        let s = sheaf_ref(sheaf)?;
        for (ptr, v) in [
            (n_vertices, s.graph().num_vertices()),
            (n_edges, s.graph().num_edges()),
            (n0, s.dims().total_vertex()),
            (n1, s.dims().total_edge()),
        ] {
            if !ptr.is_null() {
                *ptr = v;
            }
        }
        Ok(())
    })
}

/// The `N₀ × N₀` sheaf Laplacian, row-major.
///
/// # Safety
/// `sheaf` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_laplacian(sheaf: *const QsSheaf, out: *mut f64, len: usize) -> QsStatus {
    guard(|| {
        let s = sheaf_ref(sheaf)?;
        let n0 = s.dims().total_vertex();
        need(len, n0 * n0, "out")?;
        let dst = slice_mut(out, len, "out")?;
        dst[..n0 * n0].copy_from_slice(&row_major(&s.laplacian()));
        Ok(())
    })
}

/// `dim H⁰`, the number of independent global sections.
///
/// # Safety
/// `sheaf` must be a live handle; `h` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_harmonic_dim(sheaf: *const QsSheaf, h: *mut usize) -> QsStatus {
    guard(|| {
        let dim = kernel_basis(sheaf_ref(sheaf)?)?.dim();
        write_out(h, dim, "h")
    })
}

/// Dirichlet energy `‖δx‖²` of a 0-cochain of length `N₀`.
///
/// # Safety
/// `sheaf` must be a live handle; `x` must hold `len` doubles; `energy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_dirichlet_energy(
    sheaf: *const QsSheaf,
    x: *const f64,
    len: usize,
    energy: *mut f64,
) -> QsStatus {
    guard(|| {
        let s = sheaf_ref(sheaf)?;
        let v = DVector::from_column_slice(slice(x, len, "x")?);
        write_out(energy, s.dirichlet_energy(&v)?, "energy")
    })
}

/// Runs `layers` explicit steps `x ← x − αΔx` in place with
/// `α = step_factor / λ_max`. On a non-finite state `x` keeps the last
/// finite iterate, `nonfinite_at` receives the failing step (0 otherwise)
/// and the status is still `QS_STATUS_OK`.
///
/// # Safety
/// `sheaf` must be a live handle; `x` must hold `len` writable doubles;
/// `nonfinite_at` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_diffuse(
    sheaf: *const QsSheaf,
    x: *mut f64,
    len: usize,
    layers: usize,
    step_factor: f64,
    nonfinite_at: *mut usize,
) -> QsStatus {
    guard(|| {
        let s = sheaf_ref(sheaf)?;
        let state = slice_mut(x, len, "x")?;
        let x0 = DMatrix::from_column_slice(len, 1, state);
        if !(step_factor > 0.0 && step_factor.is_finite()) {
            return Err(Fail(QsStatus::Precondition, format!("step_factor must be positive, got {step_factor}")));
        }
        let r = euler_diffuse(s, &x0, StepSize::Scaled(step_factor), layers, false)?;
        match r.nonfinite_at {
            None => state.copy_from_slice(r.final_state.as_slice()),
            Some(step) if step > 1 => {
                let last = euler_diffuse(s, &x0, StepSize::Scaled(step_factor), step - 1, false)?;
                state.copy_from_slice(last.final_state.as_slice());
            }
            Some(_) => {}
        }
        if !nonfinite_at.is_null() {
            *nonfinite_at = r.nonfinite_at.unwrap_or(0);
        }
        Ok(())
    })
}

/// Central moment penalty `Σ_i ‖μ_i − (tr μ_i / d_i) I‖_F²`.
///
/// # Safety
/// `sheaf` must be a live handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_cent_mm(sheaf: *const QsSheaf, value: *mut f64) -> QsStatus {
    guard(|| write_out(value, cent_mm(sheaf_ref(sheaf)?), "value"))
}

/// Shifted moment penalty `Σ_i ‖μ_i − θ_i I‖_F²` after projecting the raw
/// per-object values (vertices first, then edges) onto `θ · d = 0`.
///
/// # Safety
/// `sheaf` must be a live handle; `raw_theta` must hold `len` doubles;
/// `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_sheaf_theta_mm(
    sheaf: *const QsSheaf,
    raw_theta: *const f64,
    len: usize,
    value: *mut f64,
) -> QsStatus {
    guard(|| {
        let s = sheaf_ref(sheaf)?;
        let theta = project_theta(slice(raw_theta, len, "raw_theta")?, s.dims())?;
        write_out(value, theta_mm(s, &theta)?, "value")
    })
}
