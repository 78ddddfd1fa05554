use dynact_ffi::*;
use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

const THORAX: &str = include_str!("../../core/configs/thorax.json");

fn tiny_json() -> CString {
    let text = THORAX
        .replace("\"num_angles\": 660", "\"num_angles\": 48")
        .replace("\"num_detectors\": 451", "\"num_detectors\": 65")
        .replace("\"grid_size\": 257", "\"grid_size\": 33")
        .replace("\"num_snapshots\": 41", "\"num_snapshots\": 9")
        .replace("\"nx\": 257, \"ny\": 257", "\"nx\": 33, \"ny\": 33");
    assert_ne!(text, THORAX);
    CString::new(text).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(dynact_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn load_tiny() -> *mut DynactConfig {
    let mut cfg = ptr::null_mut();
    let json = tiny_json();
    assert_eq!(
        unsafe { dynact_config_from_json(json.as_ptr(), &mut cfg) },
        DynactStatus::Ok
    );
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(dynact_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn cfl_step_matches_the_closed_form() {
    let dt = dynact_cfl_dt(2.0, 1.0, 1.0, 0.1, 0.2, 1.0);
    let expected = 1.0 / (4.0f64.sqrt() * (1.0 / 0.1 + 1.0 / 0.2));
    assert!((dt - expected).abs() < 1e-15, "{dt} vs {expected}");
}

#[test]
fn null_arguments_are_reported() {
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { dynact_config_from_json(ptr::null(), &mut cfg) },
        DynactStatus::NullPointer
    );
    assert!(last_error().contains("json"));
    let json = tiny_json();
    assert_eq!(
        unsafe { dynact_config_from_json(json.as_ptr(), ptr::null_mut()) },
        DynactStatus::NullPointer
    );
    assert_eq!(
        unsafe { dynact_config_set_seed(ptr::null_mut(), 1) },
        DynactStatus::NullPointer
    );
    assert_eq!(
        unsafe { dynact_run_stage(ptr::null(), 0, ptr::null()) },
        DynactStatus::NullPointer
    );
    let mut sino = ptr::null_mut();
    assert_eq!(
        unsafe { dynact_simulate(ptr::null(), &mut sino) },
        DynactStatus::NullPointer
    );
    assert!(sino.is_null());
    assert!(unsafe { dynact_sinogram_data(ptr::null()) }.is_null());
    assert!(unsafe { dynact_image_data(ptr::null()) }.is_null());
    let mut r = 0.0;
    assert_eq!(
        unsafe { dynact_image_rmse(ptr::null(), ptr::null(), &mut r) },
        DynactStatus::NullPointer
    );
    unsafe {
        dynact_config_free(ptr::null_mut());
        dynact_sinogram_free(ptr::null_mut());
        dynact_image_free(ptr::null_mut());
    }
}

#[test]
fn invalid_input_maps_to_status_codes() {
    let mut cfg = ptr::null_mut();
    let broken = CString::new("{ \"version\": 1 ").unwrap();
    assert_eq!(
        unsafe { dynact_config_from_json(broken.as_ptr(), &mut cfg) },
        DynactStatus::Config
    );
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());

    let invalid = CString::new(THORAX.replace("\"cfl_safety\": 0.9", "\"cfl_safety\": 3.0")).unwrap();
    assert_eq!(
        unsafe { dynact_config_from_json(invalid.as_ptr(), &mut cfg) },
        DynactStatus::Config
    );
    assert!(last_error().contains("cfl_safety"), "{}", last_error());

    let bad_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { dynact_config_from_json(bad_utf8.as_ptr().cast(), &mut cfg) },
        DynactStatus::InvalidUtf8
    );

    let missing = CString::new("/nonexistent/dynact.json").unwrap();
    assert_eq!(
        unsafe { dynact_config_load(missing.as_ptr(), &mut cfg) },
        DynactStatus::Io
    );
    let mut img = ptr::null_mut();
    let missing = CString::new("/nonexistent/image.img").unwrap();
    assert_eq!(
        unsafe { dynact_image_read(missing.as_ptr(), &mut img) },
        DynactStatus::Io
    );

    let cfg = load_tiny();
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { dynact_run_stage(cfg, 9, out.as_ptr()) },
        DynactStatus::InvalidStage
    );
    assert_eq!(
        unsafe { dynact_run_stage(cfg, DynactStage::Reconstruct as i32, out.as_ptr()) },
        DynactStatus::Io
    );
    unsafe { dynact_config_free(cfg) };
}

#[test]
fn successful_calls_clear_the_last_error() {
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { dynact_config_from_json(ptr::null(), &mut cfg) },
        DynactStatus::NullPointer
    );
    assert!(!last_error().is_empty());
    let cfg = load_tiny();
    assert_eq!(last_error(), "");
    unsafe { dynact_config_free(cfg) };
}

#[test]
fn motion_compensation_beats_static_reconstruction() {
    let cfg = load_tiny();
    let mut sino = ptr::null_mut();
    assert_eq!(unsafe { dynact_simulate(cfg, &mut sino) }, DynactStatus::Ok);
    let (mut na, mut nd) = (0usize, 0usize);
    assert_eq!(
        unsafe { dynact_sinogram_dims(sino, &mut na, &mut nd) },
        DynactStatus::Ok
    );
    assert_eq!((na, nd), (48, 65));
    let data = unsafe { std::slice::from_raw_parts(dynact_sinogram_data(sino), na * nd) };
    assert!(data.iter().all(|v| v.is_finite()));
    assert!(data.iter().any(|&v| v > 0.5));

    let (mut fixed, mut moving) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(
        unsafe { dynact_reconstruct(cfg, sino, 0, &mut fixed) },
        DynactStatus::Ok
    );
    assert_eq!(
        unsafe { dynact_reconstruct(cfg, sino, 1, &mut moving) },
        DynactStatus::Ok
    );
    let (mut nx, mut ny) = (0usize, 0usize);
    assert_eq!(unsafe { dynact_image_dims(moving, &mut nx, &mut ny) }, DynactStatus::Ok);
    assert_eq!((nx, ny), (33, 33));

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { dynact_run_stage(cfg, DynactStage::Simulate as i32, out.as_ptr()) },
        DynactStatus::Ok
    );
    let truth_path = CString::new(dir.path().join("ground_truth.img").to_str().unwrap()).unwrap();
    let mut truth = ptr::null_mut();
    assert_eq!(
        unsafe { dynact_image_read(truth_path.as_ptr(), &mut truth) },
        DynactStatus::Ok
    );

    let (mut e_fixed, mut e_moving, mut e_self) = (0.0, 0.0, 1.0);
    assert_eq!(
        unsafe { dynact_image_rmse(fixed, truth, &mut e_fixed) },
        DynactStatus::Ok
    );
    assert_eq!(
        unsafe { dynact_image_rmse(moving, truth, &mut e_moving) },
        DynactStatus::Ok
    );
    assert_eq!(
        unsafe { dynact_image_rmse(truth, truth, &mut e_self) },
        DynactStatus::Ok
    );
    assert_eq!(e_self, 0.0);
    assert!(e_moving < e_fixed, "{e_moving} vs {e_fixed}");

    unsafe {
        dynact_image_free(fixed);
        dynact_image_free(moving);
        dynact_image_free(truth);
        dynact_sinogram_free(sino);
        dynact_config_free(cfg);
    }
}

#[test]
fn image_size_mismatch_is_reported() {
    let cfg = load_tiny();
    let mut sino = ptr::null_mut();
    assert_eq!(unsafe { dynact_simulate(cfg, &mut sino) }, DynactStatus::Ok);
    let mut small = ptr::null_mut();
    assert_eq!(
        unsafe { dynact_reconstruct(cfg, sino, 0, &mut small) },
        DynactStatus::Ok
    );

    let json = CString::new(
        tiny_json()
            .to_str()
            .unwrap()
            .replace("\"nx\": 33, \"ny\": 33", "\"nx\": 17, \"ny\": 17"),
    )
    .unwrap();
    let mut other = ptr::null_mut();
    assert_eq!(
        unsafe { dynact_config_from_json(json.as_ptr(), &mut other) },
        DynactStatus::Ok
    );
    let mut tiny = ptr::null_mut();
    assert_eq!(
        unsafe { dynact_reconstruct(other, sino, 0, &mut tiny) },
        DynactStatus::Ok
    );
    let mut r = 0.0;
    assert_eq!(
        unsafe { dynact_image_rmse(small, tiny, &mut r) },
        DynactStatus::Mismatch
    );
    unsafe {
        dynact_image_free(small);
        dynact_image_free(tiny);
        dynact_sinogram_free(sino);
        dynact_config_free(cfg);
        dynact_config_free(other);
    }
}

#[test]
fn run_stage_produces_the_report() {
    let cfg = load_tiny();
    assert_eq!(unsafe { dynact_config_set_seed(cfg, 99) }, DynactStatus::Ok);
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let status = unsafe { dynact_run_stage(cfg, DynactStage::All as i32, out.as_ptr()) };
    assert_eq!(status, DynactStatus::Ok, "{}", last_error());
    assert!(dir.path().join("report.json").is_file());
    assert!(dir.path().join("recon_pde_exact.img").is_file());
    unsafe { dynact_config_free(cfg) };
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dynact.h");
    let header = std::fs::read_to_string(&header_path).unwrap();
    for name in [
        "dynact_last_error_message",
        "dynact_version",
        "dynact_cfl_dt",
        "dynact_config_load",
        "dynact_config_from_json",
        "dynact_config_set_seed",
        "dynact_config_free",
        "dynact_run_stage",
        "dynact_simulate",
        "dynact_sinogram_dims",
        "dynact_sinogram_data",
        "dynact_sinogram_free",
        "dynact_reconstruct",
        "dynact_image_read",
        "dynact_image_dims",
        "dynact_image_data",
        "dynact_image_rmse",
        "dynact_image_free",
        "DYNACT_STATUS_OK",
        "DYNACT_STAGE_ALL",
        "typedef struct DynactConfig DynactConfig",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }

    let Ok(cc) = std::env::var("CC").or_else(|_| which("cc")) else {
        eprintln!("no C compiler found, skipping compile check");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "dynact.h"
#include <stddef.h>
int main(void) {
    DynactConfig *cfg = NULL;
    DynactStatus st = dynact_config_load("x.json", &cfg);
    size_t nx = 0, ny = 0;
    DynactImage *img = NULL;
    st = dynact_image_dims(img, &nx, &ny);
    (void)dynact_run_stage(cfg, DYNACT_STAGE_ALL, NULL);
    dynact_config_free(cfg);
    return st == DYNACT_STATUS_OK ? 0 : (int)st;
}
"#,
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-pedantic", "-c"])
        .arg("-I")
        .arg(header_path.parent().unwrap())
        .arg(&src)
        .arg("-o")
        .arg(dir.path().join("use.o"))
        .status()
        .unwrap();
    assert!(status.success());
}

fn which(name: &str) -> Result<String, ()> {
    let ok = Command::new(name)
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false);
    if ok {
        Ok(name.to_string())
    } else {
        Err(())
    }
}
