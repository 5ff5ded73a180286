use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use jaws_core::container::{save_checkpoint, save_dataset, CheckpointMeta};
use jaws_core::eval::weight_maps;
use jaws_core::solver::{generate_dataset, BurgersSolver, DatasetConfig};
use jaws_core::{Architecture, Field, HeadKind, ModelParams};
use jaws_ffi::*;

fn sine(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
        .collect()
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = jaws_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn identity(n: usize) -> *mut JawsModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { jaws_model_init(n, 4, 3, 2, 0, &mut m) }, JawsStatus::Ok);
    m
}

/// A model with every weight moved off the identity initialization.
fn perturbed(head: HeadKind) -> ModelParams {
    let arch = Architecture {
        grid: 16,
        channels: 3,
        kernel: 3,
        depth: 2,
        head,
    };
    let mut p = ModelParams::init(arch, 1).unwrap();
    for (i, t) in p.theta.iter_mut().chain(p.phi.iter_mut()).enumerate() {
        *t += 0.05 * ((i as f64) * 0.7).sin();
    }
    p
}

fn load(path: &Path) -> *mut JawsModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { jaws_model_load(cpath(path).as_ptr(), &mut m) }, JawsStatus::Ok);
    m
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(jaws_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn fresh_model_is_the_identity() {
    let m = identity(32);
    let u = sine(32);
    let mut grid = 0;
    let mut out = vec![0.0; 32];
    let mut roll = vec![0.0; 3 * 32];
    unsafe {
        assert_eq!(jaws_model_grid_size(m, &mut grid), JawsStatus::Ok);
        assert_eq!(jaws_model_step(m, u.as_ptr(), out.as_mut_ptr(), 32), JawsStatus::Ok);
        assert_eq!(jaws_model_rollout(m, u.as_ptr(), 32, 3, roll.as_mut_ptr()), JawsStatus::Ok);
    }
    assert_eq!(grid, 32);
    assert_eq!(out, u);
    assert!(roll.chunks(32).all(|r| r == u.as_slice()));
    assert!(jaws_last_error_message().is_null());

    let (mut rho, mut conv) = (0.0, false);
    let status = unsafe { jaws_model_spectral_radius(m, u.as_ptr(), 32, 50, 0, &mut rho, &mut conv) };
    assert_eq!(status, JawsStatus::Ok);
    assert_eq!(rho, 1.0);
    assert!(conv);
    unsafe { jaws_model_free(m) };
}

#[test]
fn argument_errors_set_status_and_message() {
    let m = identity(16);
    let u = sine(8);
    let mut out = vec![0.0; 8];
    unsafe {
        assert_eq!(jaws_model_step(m, u.as_ptr(), out.as_mut_ptr(), 8), JawsStatus::ShapeMismatch);
        assert!(last_error().contains("expected 16"));
        assert_eq!(jaws_model_step(ptr::null(), u.as_ptr(), out.as_mut_ptr(), 16), JawsStatus::NullPointer);
        assert_eq!(jaws_model_step(m, ptr::null(), out.as_mut_ptr(), 16), JawsStatus::NullPointer);
        assert_eq!(jaws_model_grid_size(m, ptr::null_mut()), JawsStatus::NullPointer);
        assert_eq!(jaws_model_weight_map(m, sine(16).as_ptr(), 16, vec![0.0; 16].as_mut_ptr()), JawsStatus::Unsupported);
        let mut bad = ptr::null_mut();
        assert_eq!(jaws_model_init(12, 4, 3, 2, 0, &mut bad), JawsStatus::InvalidArgument);
        assert!(bad.is_null());
        jaws_model_free(m);
        jaws_model_free(ptr::null_mut());
        jaws_dataset_free(ptr::null_mut());
    }
}

#[test]
fn checkpoint_models_step_and_weight_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jaws");
    let p = perturbed(HeadKind::Spatial { channels: 2, kernel: 3 });
    save_checkpoint(&path, &p, &CheckpointMeta::default()).unwrap();
    let m = load(&path);
    let u = sine(16);
    let mut out = vec![0.0; 16];
    let mut w = vec![0.0; 16];
    unsafe {
        assert_eq!(jaws_model_step(m, u.as_ptr(), out.as_mut_ptr(), 16), JawsStatus::Ok);
        assert_eq!(jaws_model_weight_map(m, u.as_ptr(), 16, w.as_mut_ptr()), JawsStatus::Ok);
        jaws_model_free(m);
    }
    assert_eq!(out, p.predict(&u).unwrap());
    assert_eq!(w, weight_maps(&p, &u).unwrap().precision_s2);
}

#[test]
fn rollout_reports_blow_up_after_writing_finite_states() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jaws");
    let mut p = perturbed(HeadKind::None);
    // a huge output bias pushes the state past the largest double within a few steps
    let last = p.theta.len() - 1;
    p.theta[last] = 5e307;
    save_checkpoint(&path, &p, &CheckpointMeta::default()).unwrap();
    let m = load(&path);
    let u = sine(16);
    let mut roll = vec![f64::NAN; 40 * 16];
    let status = unsafe { jaws_model_rollout(m, u.as_ptr(), 16, 40, roll.as_mut_ptr()) };
    unsafe { jaws_model_free(m) };
    assert_eq!(status, JawsStatus::Numerical);
    assert!(last_error().contains("blow-up"));
    assert!(roll[..16].iter().all(|v| v.is_finite()));
}

#[test]
fn load_errors_distinguish_io_and_format() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = ptr::null_mut();
    let missing = cpath(&dir.path().join("none.jaws"));
    assert_eq!(unsafe { jaws_model_load(missing.as_ptr(), &mut m) }, JawsStatus::Io);
    let junk = dir.path().join("junk.jaws");
    std::fs::write(&junk, b"not a container").unwrap();
    assert_eq!(unsafe { jaws_model_load(cpath(&junk).as_ptr(), &mut m) }, JawsStatus::Format);
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { jaws_dataset_load(cpath(&junk).as_ptr(), &mut d) }, JawsStatus::Format);
    assert_eq!(unsafe { jaws_model_load(ptr::null(), &mut m) }, JawsStatus::NullPointer);
    assert!(m.is_null() && d.is_null());
}

#[test]
fn dataset_handles_expose_states() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jaws");
    let ds = generate_dataset(&DatasetConfig {
        n_trajectories: 3,
        grid: 32,
        steps: 6,
        seed: 4,
        ..DatasetConfig::default()
    })
    .unwrap();
    save_dataset(&path, &ds).unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { jaws_dataset_load(cpath(&path).as_ptr(), &mut d) }, JawsStatus::Ok);
    let (mut nt, mut ns, mut n) = (0, 0, 0);
    let mut out = vec![0.0; 32];
    let mut nu = 0.0;
    unsafe {
        assert_eq!(jaws_dataset_shape(d, &mut nt, &mut ns, &mut n), JawsStatus::Ok);
        assert_eq!(jaws_dataset_state(d, 2, 5, out.as_mut_ptr(), 32, &mut nu), JawsStatus::Ok);
        assert_eq!(jaws_dataset_state(d, 3, 0, out.as_mut_ptr(), 32, &mut nu), JawsStatus::InvalidArgument);
        assert_eq!(jaws_dataset_state(d, 0, 7, out.as_mut_ptr(), 32, ptr::null_mut()), JawsStatus::InvalidArgument);
        assert_eq!(jaws_dataset_state(d, 0, 0, out.as_mut_ptr(), 16, ptr::null_mut()), JawsStatus::ShapeMismatch);
        jaws_dataset_free(d);
    }
    assert_eq!((nt, ns, n), (3, 7, 32));
    assert_eq!(out.as_slice(), ds.trajectories[2].states[5].values());
    assert_eq!(nu, ds.trajectories[2].nu);
}

#[test]
fn solver_integration_matches_the_library() {
    let u = sine(64);
    let mut out = vec![0.0; 6 * 64];
    let status = unsafe { jaws_solver_integrate(u.as_ptr(), 64, 0.01, 0.01, 10, 5, out.as_mut_ptr()) };
    assert_eq!(status, JawsStatus::Ok);
    let traj = BurgersSolver::new(64)
        .unwrap()
        .integrate(&Field::new(u.clone()).unwrap(), 0.01, 0.01, 5, 10)
        .unwrap();
    for (row, s) in out.chunks(64).zip(&traj.states) {
        assert_eq!(row, s.values());
    }
    let status = unsafe { jaws_solver_integrate(u.as_ptr(), 48, 0.01, 0.01, 10, 5, out.as_mut_ptr()) };
    assert_eq!(status, JawsStatus::InvalidArgument);
    assert!(last_error().contains("power of two"));
    let status = unsafe { jaws_solver_integrate(u.as_ptr(), 64, -1.0, 0.01, 10, 5, out.as_mut_ptr()) };
    assert_eq!(status, JawsStatus::InvalidArgument);
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(crate_dir.join("include/jaws.h")).unwrap();
    for sym in [
        "jaws_version",
        "jaws_last_error_message",
        "jaws_model_load",
        "jaws_model_init",
        "jaws_model_free",
        "jaws_model_grid_size",
        "jaws_model_step",
        "jaws_model_rollout",
        "jaws_model_spectral_radius",
        "jaws_model_weight_map",
        "jaws_dataset_load",
        "jaws_dataset_free",
        "jaws_dataset_shape",
        "jaws_dataset_state",
        "jaws_solver_integrate",
        "JAWS_STATUS_SHAPE_MISMATCH",
    ] {
        assert!(header.contains(sym), "{sym} missing from header");
    }

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include "jaws.h"
#include <stdio.h>
int main(void) {
    JawsModel *m = NULL;
    double u[16], v[16];
    for (int i = 0; i < 16; i++) u[i] = (double)i / 16.0;
    if (jaws_model_init(16, 4, 3, 2, 0, &m) != JAWS_STATUS_OK) return 1;
    if (jaws_model_step(m, u, v, 16) != JAWS_STATUS_OK) return 2;
    for (int i = 0; i < 16; i++) if (u[i] != v[i]) return 3;
    if (jaws_model_step(m, u, v, 8) != JAWS_STATUS_SHAPE_MISMATCH) return 4;
    if (jaws_last_error_message() == NULL) return 5;
    jaws_model_free(m);
    printf("%s\n", jaws_version());
    return 0;
}
"#,
    )
    .unwrap();
    let lib_dir = target_dir();
    let exe = dir.path().join("smoke");
    let cc = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .args(["-ljaws_ffi", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(cc.success());
    let run = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    assert!(run.status.success(), "smoke exited with {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
