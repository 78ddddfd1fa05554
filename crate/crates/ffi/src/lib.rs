//! C interface to the dynact toolkit.
//!
//! Objects cross the boundary as opaque handles that are created by a
//! `dynact_*_new`/`_load`/`_read` function and released with the matching
//! `_free`. Every fallible call returns a [`DynactStatus`]; the message of the
//! last failure on the calling thread is available from
//! [`dynact_last_error_message`].

use dynact::config::PipelineConfig;
use dynact::motion::DeformationProvider;
use dynact::pipeline::{self, Stage};
use dynact::projection::{simulate_scan, Sinogram};
use dynact::recon::{reconstruct, reconstruct_static, Image};
use dynact::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

/// Result codes. Values 2 to 5 match the exit codes of the `dynact` tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynactStatus {
    Ok = 0,
    Config = 2,
    Io = 3,
    Solver = 4,
    Mismatch = 5,
    NullPointer = 10,
    InvalidUtf8 = 11,
    InvalidStage = 12,
    Panic = 13,
}

/// Pipeline stages accepted by [`dynact_run_stage`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynactStage {
    Simulate = 0,
    SolveMotion = 1,
    Reconstruct = 2,
    Evaluate = 3,
    All = 4,
}

/// Validated pipeline configuration.
pub struct DynactConfig {
    inner: PipelineConfig,
}

/// Row-major image, rows ordered by increasing y.
pub struct DynactImage {
    inner: Image,
}

/// Sinogram, one row of detector values per view.
pub struct DynactSinogram {
    inner: Sinogram,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn fail(status: DynactStatus, msg: &str) -> DynactStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> DynactStatus {
    let status = match e.exit_code() {
        2 => DynactStatus::Config,
        3 => DynactStatus::Io,
        4 => DynactStatus::Solver,
        _ => DynactStatus::Mismatch,
    };
    fail(status, &e.to_string())
}

/// Run `f`, turning panics and crate errors into status codes.
fn guard(f: impl FnOnce() -> Result<(), DynactStatus>) -> DynactStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DynactStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(DynactStatus::Panic, "internal panic"),
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, DynactStatus> {
    if p.is_null() {
        return Err(fail(DynactStatus::NullPointer, &format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DynactStatus::InvalidUtf8, &format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, DynactStatus> {
    p.as_ref()
        .ok_or_else(|| fail(DynactStatus::NullPointer, &format!("{what} is NULL")))
}

fn out_ptr<T>(out: *mut *mut T) -> Result<(), DynactStatus> {
    if out.is_null() {
        Err(fail(DynactStatus::NullPointer, "output pointer is NULL"))
    } else {
        Ok(())
    }
}

fn check<T>(r: dynact::Result<T>) -> Result<T, DynactStatus> {
    r.map_err(|e| from_error(&e))
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn dynact_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dynact_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Largest stable explicit time step for the elastic solver.
#[no_mangle]
pub extern "C" fn dynact_cfl_dt(lambda: f64, mu: f64, rho: f64, dx: f64, dy: f64, safety: f64) -> f64 {
    dynact::elastic::cfl_bound(lambda, mu, rho, dx, dy, safety)
}

/// Read and validate a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dynact_config_load(path: *const c_char, out: *mut *mut DynactConfig) -> DynactStatus {
    guard(|| {
        out_ptr(out)?;
        let path = c_str(path, "path")?;
        let inner = check(PipelineConfig::load(path.as_ref()))?;
        *out = Box::into_raw(Box::new(DynactConfig { inner }));
        Ok(())
    })
}

/// Parse and validate a configuration from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dynact_config_from_json(json: *const c_char, out: *mut *mut DynactConfig) -> DynactStatus {
    guard(|| {
        out_ptr(out)?;
        let text = c_str(json, "json")?;
        let inner = check(PipelineConfig::from_json(text))?;
        check(inner.validate())?;
        *out = Box::into_raw(Box::new(DynactConfig { inner }));
        Ok(())
    })
}

/// Replace the random seed.
///
/// # Safety
/// `cfg` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn dynact_config_set_seed(cfg: *mut DynactConfig, seed: u64) -> DynactStatus {
    guard(|| {
        let cfg = cfg
            .as_mut()
            .ok_or_else(|| fail(DynactStatus::NullPointer, "config is NULL"))?;
        cfg.inner.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn dynact_config_free(cfg: *mut DynactConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run one pipeline stage with outputs in `out_dir`; NULL uses the
/// configured output directory.
///
/// # Safety
/// `cfg` must be a live handle; `out_dir` NULL or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dynact_run_stage(
    cfg: *const DynactConfig,
    stage: i32,
    out_dir: *const c_char,
) -> DynactStatus {
    guard(|| {
        let cfg = handle(cfg, "config")?;
        let stage = match stage {
            0 => Stage::Simulate,
            1 => Stage::SolveMotion,
            2 => Stage::Reconstruct,
            3 => Stage::Evaluate,
            4 => Stage::All,
            s => return Err(fail(DynactStatus::InvalidStage, &format!("unknown stage {s}"))),
        };
        let out = if out_dir.is_null() {
            cfg.inner.output_dir.clone()
        } else {
            PathBuf::from(c_str(out_dir, "out_dir")?)
        };
        check(pipeline::run(stage, &cfg.inner, &out))
    })
}

/// Analytic dynamic sinogram of the configured phantom and motion.
///
/// # Safety
/// `cfg` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dynact_simulate(cfg: *const DynactConfig, out: *mut *mut DynactSinogram) -> DynactStatus {
    guard(|| {
        out_ptr(out)?;
        let cfg = &handle(cfg, "config")?.inner;
        let geometry = check(cfg.geometry())?;
        let inner = check(simulate_scan(&cfg.phantom, &cfg.motion, &geometry))?;
        *out = Box::into_raw(Box::new(DynactSinogram { inner }));
        Ok(())
    })
}

/// Number of views and detector bins.
///
/// # Safety
/// `sino` must be a live handle; the out pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn dynact_sinogram_dims(
    sino: *const DynactSinogram,
    num_angles: *mut usize,
    num_detectors: *mut usize,
) -> DynactStatus {
    guard(|| {
        let g = &handle(sino, "sinogram")?.inner.geometry;
        if let Some(n) = num_angles.as_mut() {
            *n = g.num_angles;
        }
        if let Some(m) = num_detectors.as_mut() {
            *m = g.num_detectors;
        }
        Ok(())
    })
}

/// Pointer to `num_angles * num_detectors` values, or NULL for a NULL handle.
///
/// # Safety
/// `sino` must be NULL or a live handle; the data lives as long as the handle.
#[no_mangle]
pub unsafe extern "C" fn dynact_sinogram_data(sino: *const DynactSinogram) -> *const f64 {
    sino.as_ref().map_or(ptr::null(), |s| s.inner.values.as_ptr())
}

/// # Safety
/// `sino` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn dynact_sinogram_free(sino: *mut DynactSinogram) {
    if !sino.is_null() {
        drop(Box::from_raw(sino));
    }
}

/// Filtered backprojection on the configured image grid; with
/// `compensate` nonzero the configured analytic motion is compensated.
///
/// # Safety
/// `cfg` and `sino` must be live handles and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dynact_reconstruct(
    cfg: *const DynactConfig,
    sino: *const DynactSinogram,
    compensate: i32,
    out: *mut *mut DynactImage,
) -> DynactStatus {
    guard(|| {
        out_ptr(out)?;
        let cfg = &handle(cfg, "config")?.inner;
        let sino = &handle(sino, "sinogram")?.inner;
        let filter = check(cfg.filter_spec())?;
        let inner = if compensate != 0 {
            check(reconstruct(
                sino,
                &DeformationProvider::Analytic(cfg.motion),
                &filter,
                &cfg.image,
            ))?
        } else {
            check(reconstruct_static(sino, &filter, &cfg.image))?
        };
        *out = Box::into_raw(Box::new(DynactImage { inner }));
        Ok(())
    })
}

/// Read an image file written by the pipeline.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dynact_image_read(path: *const c_char, out: *mut *mut DynactImage) -> DynactStatus {
    guard(|| {
        out_ptr(out)?;
        let path = c_str(path, "path")?;
        let inner = check(dynact::io::read_image(path.as_ref()))?;
        *out = Box::into_raw(Box::new(DynactImage { inner }));
        Ok(())
    })
}

/// Pixel counts along x and y.
///
/// # Safety
/// `img` must be a live handle; the out pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn dynact_image_dims(img: *const DynactImage, nx: *mut usize, ny: *mut usize) -> DynactStatus {
    guard(|| {
        let s = &handle(img, "image")?.inner.spec;
        if let Some(n) = nx.as_mut() {
            *n = s.nx;
        }
        if let Some(n) = ny.as_mut() {
            *n = s.ny;
        }
        Ok(())
    })
}

/// Pointer to `nx * ny` values, or NULL for a NULL handle.
///
/// # Safety
/// `img` must be NULL or a live handle; the data lives as long as the handle.
#[no_mangle]
pub unsafe extern "C" fn dynact_image_data(img: *const DynactImage) -> *const f64 {
    img.as_ref().map_or(ptr::null(), |i| i.inner.values.as_ptr())
}

/// Root-mean-square difference of two images on the same grid.
///
/// # Safety
/// `a` and `b` must be live handles and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dynact_image_rmse(
    a: *const DynactImage,
    b: *const DynactImage,
    out: *mut f64,
) -> DynactStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(DynactStatus::NullPointer, "output pointer is NULL"));
        }
        let a = &handle(a, "image a")?.inner;
        let b = &handle(b, "image b")?.inner;
        *out = check(dynact::metrics::rmse(a, b))?;
        Ok(())
    })
}

/// # Safety
/// `img` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn dynact_image_free(img: *mut DynactImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}
