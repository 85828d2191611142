//! C ABI for the semifluxon solver.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or by a
//! computation and released by the matching `*_free`. Every fallible call
//! returns an [`SfxStatus`]; on failure `sfx_last_error_message` holds a
//! description for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use semifluxon::boundary::{area_perimeter, FluxPosition, ShapeParams};
use semifluxon::circle::{circle_levels, Parity};
use semifluxon::degeneracy::{catalog, codimension, Catalog, DegeneracyOptions};
use semifluxon::nodal_force::force;
use semifluxon::roots::{LevelList, ScanOptions};
use semifluxon::spectral::{find_levels, SolverOptions};
use semifluxon::weyl::smoothed_staircase;
use semifluxon::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfxStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Argument = 3,
    Geometry = 4,
    InvalidShape = 5,
    NotAnEigenvalue = 6,
    Window = 7,
    Stencil = 8,
    UndefinedDirection = 9,
    Tracing = 10,
    NonConvergence = 11,
    OutOfRange = 12,
    Panic = 13,
}

impl From<&Error> for SfxStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => SfxStatus::Domain,
            Error::Argument(_) => SfxStatus::Argument,
            Error::Geometry(_) => SfxStatus::Geometry,
            Error::InvalidShape(_) => SfxStatus::InvalidShape,
            Error::NotAnEigenvalue { .. } => SfxStatus::NotAnEigenvalue,
            Error::Window(_) => SfxStatus::Window,
            Error::Stencil(_) => SfxStatus::Stencil,
            Error::UndefinedDirection(_) => SfxStatus::UndefinedDirection,
            Error::Tracing { .. } => SfxStatus::Tracing,
            Error::NonConvergence(_) => SfxStatus::NonConvergence,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfxParity {
    Even = 0,
    Odd = 1,
}

/// A billiard shape with its solver settings.
pub struct SfxBilliard {
    shape: ShapeParams,
    solver: SolverOptions,
    degeneracy: DegeneracyOptions,
}

/// Ascending levels, degenerate ones repeated.
pub struct SfxLevels {
    ks: Vec<f64>,
}

pub struct SfxCatalog {
    inner: Catalog,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SfxDegeneracy {
    /// Lower level of the pair `(n, n+1)`, from 1.
    pub n: u32,
    pub x: f64,
    pub y: f64,
    pub k: f64,
    pub gap: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SfxForce {
    pub k: f64,
    pub nodal_direction: [f64; 2],
    /// `-grad k^2` over the flux position.
    pub hf_gradient: [f64; 2],
    pub alignment_cos: f64,
    pub richardson: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), (SfxStatus, String)>) -> SfxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfxStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SfxStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SfxStatus, String) {
    (SfxStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (SfxStatus, String) {
    (SfxStatus::NullPointer, format!("{what} is null"))
}

fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), (SfxStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null, and the caller promises it points to writable storage for a T.
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn borrow<'a, T>(h: *const T, what: &str) -> Result<&'a T, (SfxStatus, String)> {
    h.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sfx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn sfx_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sfx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a billiard `w = z + a2 z^2 + a3 e^{i sigma} z^3` with default
/// solver settings.
///
/// # Safety
/// `out` must be null or point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sfx_billiard_new(a2: f64, a3: f64, sigma: f64, out: *mut *mut SfxBilliard) -> SfxStatus {
    guard(|| {
        let shape = ShapeParams::new(a2, a3, sigma).map_err(lib)?;
        let solver = SolverOptions::default();
        let h = Box::new(SfxBilliard { shape, solver, degeneracy: DegeneracyOptions { solver, ..Default::default() } });
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(Box::into_raw(h));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`sfx_billiard_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sfx_billiard_free(h: *mut SfxBilliard) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Sets the collocation truncation `N` (2N boundary points).
///
/// # Safety
/// `h` must be a live billiard handle.
#[no_mangle]
pub unsafe extern "C" fn sfx_billiard_set_truncation(h: *mut SfxBilliard, n: u32) -> SfxStatus {
    guard(|| {
        let b = h.as_mut().ok_or_else(|| null("billiard"))?;
        if n == 0 || n as usize > semifluxon::spectral::MAX_TRUNCATION {
            return Err((SfxStatus::Argument, format!("truncation must be in 1..={}", semifluxon::spectral::MAX_TRUNCATION)));
        }
        b.solver.truncation = n as usize;
        b.degeneracy.solver.truncation = n as usize;
        Ok(())
    })
}

/// # Safety
/// `h` must be a live billiard handle; `area` and `perimeter` writable.
#[no_mangle]
pub unsafe extern "C" fn sfx_billiard_area_perimeter(h: *const SfxBilliard, area: *mut f64, perimeter: *mut f64) -> SfxStatus {
    guard(|| {
        let b = borrow(h, "billiard")?;
        let (a, l) = area_perimeter(&b.shape).map_err(lib)?;
        put(area, a, "area")?;
        put(perimeter, l, "perimeter")
    })
}

/// Levels in `[k_lo, k_hi]` with the flux at `(x, y)`.
///
/// # Safety
/// `h` must be a live billiard handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sfx_find_levels(h: *const SfxBilliard, x: f64, y: f64, k_lo: f64, k_hi: f64, out: *mut *mut SfxLevels) -> SfxStatus {
    guard(|| {
        let b = borrow(h, "billiard")?;
        let list = find_levels(&b.shape, FluxPosition::new(x, y), k_lo, k_hi, &b.solver).map_err(lib)?;
        put(out, Box::into_raw(Box::new(SfxLevels { ks: list.ks() })), "out")
    })
}

/// Circle levels of one parity with the flux at distance `r` from the centre,
/// using `series` terms of the addition theorem.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfx_circle_levels(parity: SfxParity, r: f64, k_lo: f64, k_hi: f64, series: u32, out: *mut *mut SfxLevels) -> SfxStatus {
    guard(|| {
        let p = match parity {
            SfxParity::Even => Parity::Even,
            SfxParity::Odd => Parity::Odd,
        };
        let list: LevelList = circle_levels(p, r, k_lo, k_hi, series as usize, &ScanOptions::default()).map_err(lib)?;
        put(out, Box::into_raw(Box::new(SfxLevels { ks: list.ks() })), "out")
    })
}

/// Number of levels, degenerate ones counted twice. 0 for a null handle.
///
/// # Safety
/// `l` must be null or a live level handle.
#[no_mangle]
pub unsafe extern "C" fn sfx_levels_len(l: *const SfxLevels) -> usize {
    l.as_ref().map_or(0, |l| l.ks.len())
}

/// # Safety
/// `l` must be a live level handle and `k` writable.
#[no_mangle]
pub unsafe extern "C" fn sfx_levels_get(l: *const SfxLevels, index: usize, k: *mut f64) -> SfxStatus {
    guard(|| {
        let l = borrow(l, "levels")?;
        let v = *l.ks.get(index).ok_or((SfxStatus::OutOfRange, format!("index {index} >= {}", l.ks.len())))?;
        put(k, v, "k")
    })
}

/// # Safety
/// `l` must be null or a level handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sfx_levels_free(l: *mut SfxLevels) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Degeneracies of the pairs `(n, n+1)`, `n < n_max`.
///
/// # Safety
/// `h` must be a live billiard handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sfx_catalog(h: *const SfxBilliard, n_max: u32, out: *mut *mut SfxCatalog) -> SfxStatus {
    guard(|| {
        let b = borrow(h, "billiard")?;
        let c = catalog(&b.shape, n_max as usize, &b.degeneracy).map_err(lib)?;
        put(out, Box::into_raw(Box::new(SfxCatalog { inner: c })), "out")
    })
}

/// # Safety
/// `c` must be null or a live catalog handle.
#[no_mangle]
pub unsafe extern "C" fn sfx_catalog_len(c: *const SfxCatalog) -> usize {
    c.as_ref().map_or(0, |c| c.inner.degeneracies.len())
}

/// # Safety
/// `c` must be a live catalog handle and `d` writable.
#[no_mangle]
pub unsafe extern "C" fn sfx_catalog_get(c: *const SfxCatalog, index: usize, d: *mut SfxDegeneracy) -> SfxStatus {
    guard(|| {
        let c = borrow(c, "catalog")?;
        let len = c.inner.degeneracies.len();
        let e = c.inner.degeneracies.get(index).ok_or((SfxStatus::OutOfRange, format!("index {index} >= {len}")))?;
        let v = SfxDegeneracy { n: e.pair[0] as u32, x: e.flux.x, y: e.flux.y, k: e.k, gap: e.gap };
        put(d, v, "degeneracy")
    })
}

/// # Safety
/// `c` must be null or a catalog handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sfx_catalog_free(c: *mut SfxCatalog) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Force on the flux at `(x, y)` for level `level` (from 1).
///
/// # Safety
/// `h` must be a live billiard handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sfx_force(h: *const SfxBilliard, x: f64, y: f64, level: u32, fd_step: f64, out: *mut SfxForce) -> SfxStatus {
    guard(|| {
        let b = borrow(h, "billiard")?;
        let e = force(&b.shape, FluxPosition::new(x, y), level as usize, fd_step, &b.solver).map_err(lib)?;
        let v = SfxForce {
            k: e.k,
            nodal_direction: e.nodal_direction,
            hf_gradient: e.hf_gradient,
            alignment_cos: e.alignment_cos,
            richardson: e.richardson,
        };
        put(out, v, "out")
    })
}

/// # Safety
/// `codim` and `min_semifluxons` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfx_codimension(n_levels: u64, codim: *mut u64, min_semifluxons: *mut u64) -> SfxStatus {
    guard(|| {
        let (c, m) = codimension(n_levels).map_err(lib)?;
        put(codim, c, "codim")?;
        put(min_semifluxons, m, "min_semifluxons")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfx_smoothed_staircase(area: f64, perimeter: f64, energy: f64, out: *mut f64) -> SfxStatus {
    guard(|| put(out, smoothed_staircase(area, perimeter, energy).map_err(lib)?, "out"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn status_mapping() {
        assert_eq!(SfxStatus::from(&Error::Stencil(String::new())), SfxStatus::Stencil);
        assert_eq!(SfxStatus::from(&Error::NotAnEigenvalue { k: 1.0, sigma_min: 1.0 }), SfxStatus::NotAnEigenvalue);
    }

    #[test]
    fn error_message_is_thread_local() {
        sfx_clear_error();
        let s = unsafe { sfx_codimension(1, ptr::null_mut(), ptr::null_mut()) };
        assert_eq!(s, SfxStatus::Argument);
        let msg = unsafe { CStr::from_ptr(sfx_last_error_message()) }.to_str().unwrap().to_owned();
        assert!(msg.contains("two levels"), "{msg}");
        std::thread::spawn(|| assert!(sfx_last_error_message().is_null())).join().unwrap();
    }

    #[test]
    fn version_string() {
        let v = unsafe { CStr::from_ptr(sfx_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
