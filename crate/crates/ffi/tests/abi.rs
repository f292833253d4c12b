use std::ffi::CStr;
use std::ptr;

use subfourier::model::{init_state, DriveSchedule, InitialState, SystemParams};
use subfourier::propagator::Propagator;
use subfourier_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    unsafe {
        sf_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn system(k: f64, m: usize) -> *mut SfSystem {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { sf_system_new(k, sf_hbar_eff(27.8), 0.0, m, &mut s) }, SfStatus::Ok);
    s
}

#[test]
fn evolve_matches_core() {
    let s = system(10.0, 96);
    let mut p2 = vec![0.0; 8];
    let mut p0 = vec![0.0; 8];
    let st = unsafe { sf_evolve(s, 1.0003, 0.3, 8, 2, p2.as_mut_ptr(), p0.as_mut_ptr(), 8) };
    assert_eq!(st, SfStatus::Ok, "{}", last_error());

    let params = SystemParams::new(10.0, sf_hbar_eff(27.8), 0.0, 96).unwrap();
    let mut psi = init_state(&params, InitialState::DeltaAtZero).unwrap();
    let ev = Propagator::new(&params)
        .evolve(&mut psi, &DriveSchedule::new(1.0003, 0.3, 8).unwrap(), 2)
        .unwrap();
    for (i, r) in ev.records.iter().enumerate() {
        assert_eq!(p2[i], r.p2);
        assert_eq!(p0[i], r.p0);
    }
    unsafe { sf_system_free(s) };
}

#[test]
fn errors_are_reported() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { sf_system_new(-1.0, 1.0, 0.0, 8, &mut s) }, SfStatus::InvalidParameter);
    assert!(s.is_null());
    assert!(last_error().contains("kick_strength"), "{}", last_error());

    assert_eq!(unsafe { sf_system_new(1.0, 1.0, 0.0, 8, ptr::null_mut()) }, SfStatus::NullPointer);
    assert_eq!(unsafe { sf_evolve(ptr::null(), 1.0, 0.0, 1, 0, ptr::null_mut(), ptr::null_mut(), 0) }, SfStatus::NullPointer);

    let s = system(10.0, 8);
    let mut p2 = [0.0; 4];
    assert_eq!(unsafe { sf_evolve(s, 1.0, 0.5, 5, 0, p2.as_mut_ptr(), ptr::null_mut(), 4) }, SfStatus::BufferTooSmall);
    assert_eq!(unsafe { sf_evolve(s, 0.0, 0.5, 4, 0, p2.as_mut_ptr(), ptr::null_mut(), 4) }, SfStatus::InvalidParameter);
    assert!(last_error().contains("ratio"));
    let mut big = [0.0; 50];
    assert_eq!(unsafe { sf_evolve(s, 1.0, 0.5, 50, 0, big.as_mut_ptr(), ptr::null_mut(), 50) }, SfStatus::Truncation);

    sf_clear_error();
    assert_eq!(unsafe { sf_last_error_message(ptr::null_mut(), 0) }, 0);
    unsafe {
        sf_system_free(s);
        sf_system_free(ptr::null_mut());
    }
}

#[test]
fn eigenphases_are_sorted_and_weights_sum_to_one() {
    let s = system(5.0, 12);
    let dim = unsafe { sf_system_dim(s) };
    assert_eq!(dim, 25);
    let mut ph = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    assert_eq!(unsafe { sf_floquet_eigenphases(s, 0.4, ph.as_mut_ptr(), w.as_mut_ptr(), dim) }, SfStatus::Ok);
    assert!(ph.windows(2).all(|p| p[0] <= p[1]));
    assert!(ph.iter().all(|&p| (0.0..std::f64::consts::TAU).contains(&p)));
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert_eq!(
        unsafe { sf_floquet_eigenphases(s, 0.4, ph.as_mut_ptr(), ptr::null_mut(), dim - 1) },
        SfStatus::BufferTooSmall
    );
    unsafe { sf_system_free(s) };
}

#[test]
fn classical_diffusion_is_quasilinear_for_strong_kicks() {
    let (mut d, mut e) = (0.0, 0.0);
    let st = unsafe { sf_classical_diffusion(10.0, 1.0, 0.5, 40, 20_000, 3, &mut d, &mut e) };
    assert_eq!(st, SfStatus::Ok, "{}", last_error());
    assert!((d / 50.0 - 1.0).abs() < 0.3, "{d}");
    assert!(e > 0.0 && e < d);
    assert_eq!(unsafe { sf_classical_diffusion(10.0, 1.0, 0.5, 40, 10, 3, &mut d, &mut e) }, SfStatus::InvalidParameter);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/subfourier.h")).unwrap();
    for name in [
        "sf_last_error_message",
        "sf_clear_error",
        "sf_hbar_eff",
        "sf_system_new",
        "sf_system_free",
        "sf_system_dim",
        "sf_evolve",
        "sf_floquet_eigenphases",
        "sf_classical_diffusion",
        "typedef struct SfSystem SfSystem",
        "SF_STATUS_TRUNCATION = 4",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Compiles a small C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which("cc") else { return };
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let target = manifest.join("../../target").join(if cfg!(debug_assertions) { "debug" } else { "release" });
    let lib = target.join("libsubfourier_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let src = dir.join("t.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "subfourier.h"
int main(void) {
    SfSystem *s = NULL;
    if (sf_system_new(10.0, sf_hbar_eff(27.8), 0.0, 64, &s) != SF_STATUS_OK) return 1;
    double p2[3];
    if (sf_evolve(s, 1.0, 0.5, 3, 2, p2, NULL, 3) != SF_STATUS_OK) return 2;
    if (sf_evolve(s, -1.0, 0.5, 3, 2, p2, NULL, 3) != SF_STATUS_INVALID_PARAMETER) return 3;
    char msg[128];
    if (sf_last_error_message(msg, sizeof msg) == 0) return 4;
    sf_system_free(s);
    printf("%.6f\n", p2[2]);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("t");
    let status = std::process::Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let p2: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(p2 > 0.0);
}

fn which(name: &str) -> Result<std::path::PathBuf, ()> {
    std::env::var_os("PATH")
        .and_then(|p| std::env::split_paths(&p).map(|d| d.join(name)).find(|c| c.exists()))
        .ok_or(())
}
