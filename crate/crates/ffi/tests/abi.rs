use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use poiseuille_lab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(pl_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(pl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn mode_solve_round_trip() {
    let forcing = CString::new("even_rhs").unwrap();
    let mut mode = ptr::null_mut();
    let st = unsafe { pl_mode_solve(1e4, 1.0, 1, PlSolver::Clamped, forcing.as_ptr(), 7, &mut mode) };
    assert_eq!(st, PlStatus::Ok, "{}", last_error());
    let len = unsafe { pl_mode_len(mode) };
    assert!(len >= 64);
    let (mut y, mut re, mut im) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let st = unsafe { pl_mode_stream_function(mode, y.as_mut_ptr(), re.as_mut_ptr(), im.as_mut_ptr(), len) };
    assert_eq!(st, PlStatus::Ok);
    // Clamped walls: the stream function vanishes at y = ±1.
    let wall = y.iter().position(|v| (v.abs() - 1.0).abs() < 1e-14).unwrap();
    assert!(re[wall].abs() + im[wall].abs() < 1e-10);
    assert!(re.iter().chain(&im).any(|v| v.abs() > 1e-8));

    let st = unsafe { pl_mode_stream_function(mode, ptr::null_mut(), re.as_mut_ptr(), ptr::null_mut(), len - 1) };
    assert_eq!(st, PlStatus::BufferTooSmall);

    let mut value = f64::NAN;
    let name = CString::new("energy1").unwrap();
    assert_eq!(unsafe { pl_mode_quantity(mode, name.as_ptr(), &mut value) }, PlStatus::Ok);
    assert!(value > 0.0);
    let name = CString::new("ratio_velocity_l2").unwrap();
    assert_eq!(unsafe { pl_mode_quantity(mode, name.as_ptr(), &mut value) }, PlStatus::Ok);
    let name = CString::new("nonsense").unwrap();
    assert_eq!(unsafe { pl_mode_quantity(mode, name.as_ptr(), &mut value) }, PlStatus::NotFound);
    assert!(last_error().contains("nonsense"));
    unsafe { pl_mode_free(mode) };
}

#[test]
fn invalid_arguments_map_to_codes() {
    let forcing = CString::new("even_rhs").unwrap();
    let mut mode = ptr::null_mut();
    let st = unsafe { pl_mode_solve(-1.0, 1.0, 1, PlSolver::Clamped, forcing.as_ptr(), 7, &mut mode) };
    assert_eq!(st, PlStatus::InvalidInput);
    assert!(mode.is_null());
    let st = unsafe { pl_mode_solve(1e4, 1.0, 1, PlSolver::Clamped, ptr::null(), 7, &mut mode) };
    assert_eq!(st, PlStatus::NullPointer);
    let bad = [0xffu8, 0];
    let st = unsafe { pl_mode_solve(1e4, 1.0, 1, PlSolver::Clamped, bad.as_ptr().cast(), 7, &mut mode) };
    assert_eq!(st, PlStatus::InvalidUtf8);
    let mut spec = ptr::null_mut();
    let cmd = CString::new("no-such-command").unwrap();
    assert_eq!(unsafe { pl_spec_new(cmd.as_ptr(), &mut spec) }, PlStatus::InvalidInput);
    let doc = CString::new("command = \"sweep\"\n[params]\nbogus = 1\n").unwrap();
    assert_eq!(unsafe { pl_spec_from_toml(doc.as_ptr(), &mut spec) }, PlStatus::InvalidInput);
    assert!(last_error().contains("bogus"), "{}", last_error());
    unsafe {
        pl_spec_free(ptr::null_mut());
        pl_mode_free(ptr::null_mut());
    }
}

#[test]
fn run_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut spec = ptr::null_mut();
    let cmd = CString::new("bl-profile").unwrap();
    assert_eq!(unsafe { pl_spec_new(cmd.as_ptr(), &mut spec) }, PlStatus::Ok);
    let (phi, l, n) = ([1e5], [2.0], [-3i64]);
    let st = unsafe { pl_spec_set_grid(spec, phi.as_ptr(), 1, l.as_ptr(), 1, n.as_ptr(), 1) };
    assert_eq!(st, PlStatus::Ok);
    assert_eq!(unsafe { pl_spec_validate(spec) }, PlStatus::Ok);
    let mut code = -1;
    assert_eq!(unsafe { pl_run(spec, out.as_ptr(), &mut code) }, PlStatus::Ok, "{}", last_error());
    assert_eq!(code, 0);
    assert!(dir.path().join("summary.json").exists());

    let st = unsafe { pl_spec_set_grid(spec, ptr::null(), 0, l.as_ptr(), 1, n.as_ptr(), 1) };
    assert_eq!(st, PlStatus::Ok);
    assert_eq!(unsafe { pl_spec_validate(spec) }, PlStatus::InvalidInput);
    let empty = tempfile::tempdir().unwrap();
    let out = CString::new(empty.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { pl_run(spec, out.as_ptr(), &mut code) }, PlStatus::InvalidInput);
    assert_eq!(code, 1);
    assert_eq!(std::fs::read_dir(empty.path()).unwrap().count(), 0);
    unsafe { pl_spec_free(spec) };
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/poiseuille_lab.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["pl_mode_solve", "pl_run", "pl_last_error", "PL_STATUS_NUMERICAL", "typedef struct PlSpec PlSpec"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).status() else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(status.success());
}
