use std::ffi::{CStr, CString};
use std::ptr;

use sdde_lift_ffi::*;

fn last_error() -> String {
    let p = sdde_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn template(name: &str, k: usize) -> *mut SddeProblem {
    let name = CString::new(name).unwrap();
    let mut p = ptr::null_mut();
    let s = unsafe { sdde_problem_from_template(name.as_ptr(), k, &mut p) };
    assert_eq!(s, SddeStatus::Ok);
    assert!(!p.is_null());
    p
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(sdde_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn problem_shape_follows_requested_grid() {
    let p = template("advertising", 16);
    let (mut n, mut k, mut c) = (0, 0, 0);
    assert_eq!(unsafe { sdde_problem_shape(p, &mut n, &mut k, &mut c) }, SddeStatus::Ok);
    assert_eq!((n, k), (1, 16));
    assert!(c > 0);
    unsafe { sdde_problem_free(p) };
}

#[test]
fn unknown_template_reports_config_error() {
    let name = CString::new("nope").unwrap();
    let mut p = ptr::null_mut();
    let s = unsafe { sdde_problem_from_template(name.as_ptr(), 0, &mut p) };
    assert_eq!(s, SddeStatus::Config);
    assert!(p.is_null());
    assert!(last_error().contains("nope"));
}

#[test]
fn bad_toml_reports_config_error() {
    let text = CString::new("[grid]\nk = \"many\"\n").unwrap();
    let mut p = ptr::null_mut();
    let s = unsafe { sdde_problem_from_toml(text.as_ptr(), 0, &mut p) };
    assert_eq!(s, SddeStatus::Config);
    assert!(last_error().contains("grid.k"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { sdde_problem_from_template(ptr::null(), 0, &mut p) },
        SddeStatus::NullPointer
    );
    assert_eq!(
        unsafe { sdde_problem_shape(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) },
        SddeStatus::NullPointer
    );
    unsafe {
        sdde_problem_free(ptr::null_mut());
        sdde_pack_free(ptr::null_mut());
    }
}

#[test]
fn simulated_path_starts_at_history_and_reports_size() {
    let p = template("zero", 8);
    let (mut n, mut k) = (0, 0);
    unsafe { sdde_problem_shape(p, &mut n, &mut k, ptr::null_mut()) };
    let mut written = 0;
    let s = unsafe { sdde_simulate_path(p, 0, 1.0, 3, 0, ptr::null_mut(), 0, &mut written) };
    assert_eq!(s, SddeStatus::BufferTooSmall);
    let steps = 8;
    assert_eq!(written, n * (steps + 1));
    let mut buf = vec![f64::NAN; written];
    let s = unsafe { sdde_simulate_path(p, 0, 1.0, 3, 0, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(s, SddeStatus::Ok, "{}", last_error());
    assert!(buf.iter().all(|v| v.is_finite()));
    let first = buf[0];
    assert!(buf.iter().all(|v| *v == first));
    unsafe { sdde_problem_free(p) };
}

#[test]
fn misaligned_horizon_is_a_simulation_error() {
    let p = template("advertising", 8);
    let mut w = 0;
    let s = unsafe { sdde_simulate_path(p, 0, 0.3, 0, 0, ptr::null_mut(), 0, &mut w) };
    assert_eq!(s, SddeStatus::Simulation);
    let s = unsafe { sdde_simulate_path(p, 10_000, 1.0, 0, 0, ptr::null_mut(), 0, &mut w) };
    assert_eq!(s, SddeStatus::Hamiltonian);
    unsafe { sdde_problem_free(p) };
}

#[test]
fn routes_give_close_policy_values() {
    let p = template("advertising", 16);
    let (mut m1, mut s1, mut m2, mut s2) = (0.0, 0.0, 0.0, 0.0);
    let st = unsafe { sdde_evaluate_constant_policy(p, 0, 1.0, 200, 9, SddeRoute::Sdde, &mut m1, &mut s1) };
    assert_eq!(st, SddeStatus::Ok, "{}", last_error());
    let st = unsafe { sdde_evaluate_constant_policy(p, 0, 1.0, 200, 9, SddeRoute::Lift, &mut m2, &mut s2) };
    assert_eq!(st, SddeStatus::Ok);
    assert!(s1 > 0.0 && s2 > 0.0);
    assert!((m1 - m2).abs() < 0.05 * m1.abs().max(1.0), "{m1} {m2}");
    unsafe { sdde_problem_free(p) };
}

#[test]
fn pack_exposes_spectrum_and_certificate() {
    let p = template("advertising", 16);
    let mut pack = ptr::null_mut();
    assert_eq!(unsafe { sdde_pack_new(p, f64::NAN, &mut pack) }, SddeStatus::Ok);
    let (mut dim, mut mu0, mut mu) = (0, 0.0, 0.0);
    unsafe { sdde_pack_info(pack, &mut dim, &mut mu0, &mut mu) };
    assert_eq!(dim, 17);
    assert!(mu > mu0);

    let mut ev = vec![0.0; dim];
    let mut w = 0;
    assert_eq!(unsafe { sdde_pack_eigenvalues(pack, ev.as_mut_ptr(), dim, &mut w) }, SddeStatus::Ok);
    assert_eq!(w, dim);
    assert!(ev.windows(2).all(|e| e[0] >= e[1]));
    assert!(ev.iter().all(|e| *e > 0.0));

    let x = vec![1.0; dim];
    let mut norm = 0.0;
    assert_eq!(unsafe { sdde_pack_minus_one_norm(pack, x.as_ptr(), dim, &mut norm) }, SddeStatus::Ok);
    assert!(norm > 0.0);
    assert_eq!(
        unsafe { sdde_pack_minus_one_norm(pack, x.as_ptr(), dim - 1, &mut norm) },
        SddeStatus::InvalidArgument
    );

    let (mut pass, mut iv) = (0, 0.0);
    let st = unsafe { sdde_pack_weak_b_certificate(pack, 500, 1, 1e-9, &mut pass, &mut iv) };
    assert_eq!(st, SddeStatus::Ok);
    assert_eq!(pass, 1);
    assert!(iv <= 1e-9);
    unsafe {
        sdde_pack_free(pack);
        sdde_problem_free(p);
    }
}

#[test]
fn shift_below_mu0_fails_certificate() {
    let p = template("zero", 8);
    let mut pack = ptr::null_mut();
    assert_eq!(unsafe { sdde_pack_new(p, 0.25, &mut pack) }, SddeStatus::Ok, "{}", last_error());
    let (mut pass, mut iv) = (1, 0.0);
    unsafe { sdde_pack_weak_b_certificate(pack, 500, 1, 1e-9, &mut pass, &mut iv) };
    assert_eq!(pass, 0);
    assert!(iv > 0.0);
    unsafe {
        sdde_pack_free(pack);
        sdde_problem_free(p);
    }
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sdde_lift.h")).unwrap();
    for f in [
        "sdde_last_error",
        "sdde_version",
        "sdde_problem_from_toml",
        "sdde_problem_from_template",
        "sdde_problem_free",
        "sdde_problem_shape",
        "sdde_simulate_path",
        "sdde_evaluate_constant_policy",
        "sdde_pack_new",
        "sdde_pack_free",
        "sdde_pack_info",
        "sdde_pack_eigenvalues",
        "sdde_pack_minus_one_norm",
        "sdde_pack_weak_b_certificate",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f}");
    }
}
