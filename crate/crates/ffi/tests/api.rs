use std::ffi::{CStr, CString};
use std::f64::consts::PI;
use std::ptr;

use tubecalc_ffi::*;

fn quick_sphere() -> *mut TcEngine {
    let mut e = ptr::null_mut();
    unsafe {
        assert_eq!(tc_engine_sphere(3, 1.0, &mut e), TcStatus::Ok);
        assert_eq!(tc_engine_set_levels(e, 16, 2, 32), TcStatus::Ok);
    }
    e
}

fn last_error() -> String {
    let p = tc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn derivative_of_delta_on_unit_sphere() {
    unsafe {
        let e = quick_sphere();
        let mut delta = ptr::null_mut();
        let mut d1 = ptr::null_mut();
        let mut phi = ptr::null_mut();
        assert_eq!(tc_dist_delta(0, &mut delta), TcStatus::Ok);
        assert_eq!(tc_dist_derivative(e, delta, 1, &mut d1), TcStatus::Ok);
        assert_eq!(tc_testfn_normal_component(1, 0.5, &mut phi), TcStatus::Ok);
        let mut out = std::mem::zeroed::<TcPairing>();
        assert_eq!(tc_pair(e, d1, phi, 0.0, &mut out), TcStatus::Ok);
        assert!((out.value + 8.0 * PI / 3.0).abs() < 1e-8, "{}", out.value);
        assert!(out.eta.is_nan() && out.eta_consistent);
        let oracle = tc_sphere_delta_derivative_oracle(3, 1.0, 1, 1, 0);
        assert!((out.value - oracle).abs() < 1e-8);

        let mut buf = [0 as std::ffi::c_char; 64];
        let n = tc_dist_label(d1, buf.as_mut_ptr(), buf.len());
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap().len(), n);

        tc_testfn_free(phi);
        tc_dist_free(d1);
        tc_dist_free(delta);
        tc_engine_free(e);
    }
}

#[test]
fn finite_part_pairing_reports_eta_check() {
    unsafe {
        let e = quick_sphere();
        let mut pf = ptr::null_mut();
        let mut phi = ptr::null_mut();
        let coeffs = [1.0, 0.5, 0.25];
        assert_eq!(tc_dist_pf(-1.5, 0.0, &mut pf), TcStatus::Ok);
        assert_eq!(tc_testfn_laurent(-1, coeffs.as_ptr(), coeffs.len(), 0.5, &mut phi), TcStatus::Ok);
        let mut out = std::mem::zeroed::<TcPairing>();
        assert_eq!(tc_pair(e, pf, phi, 0.2, &mut out), TcStatus::Ok);
        assert_eq!(out.eta, 0.2);
        assert!((out.value - out.value_eta_half).abs() < 1e-7 * (1.0 + out.value.abs()));
        assert!(out.eta_consistent);
        tc_testfn_free(phi);
        tc_dist_free(pf);
        tc_engine_free(e);
    }
}

#[test]
fn residue_routes_agree() {
    unsafe {
        let e = quick_sphere();
        let mut phi = ptr::null_mut();
        assert_eq!(tc_testfn_bump(0.5, &mut phi), TcStatus::Ok);
        let (mut formula, mut limit) = (0.0, 0.0);
        assert_eq!(tc_residue(e, -1, phi, &mut formula, &mut limit), TcStatus::Ok);
        assert!((formula - 8.0 * PI).abs() < 1e-9, "{formula}");
        assert!((limit - formula).abs() < 1e-3 * formula.abs());
        tc_testfn_free(phi);
        tc_engine_free(e);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        assert_eq!(tc_engine_sphere(3, -1.0, ptr::null_mut()), TcStatus::InvalidArgument);
        assert!(last_error().contains("r > 0"));
        assert_eq!(tc_engine_sphere(3, 1.0, ptr::null_mut()), TcStatus::NullPointer);
        assert!(last_error().contains("out"));

        let e = quick_sphere();
        let mut delta = ptr::null_mut();
        let mut bad = ptr::null_mut();
        assert_eq!(tc_dist_delta(0, &mut delta), TcStatus::Ok);
        assert_eq!(tc_dist_derivative(e, delta, 4, &mut bad), TcStatus::InvalidArgument);
        assert!(bad.is_null());
        assert!(last_error().contains("axis 4"));

        // support larger than the tube
        let mut phi = ptr::null_mut();
        assert_eq!(tc_testfn_bump(5.0, &mut phi), TcStatus::Ok);
        let mut out = std::mem::zeroed::<TcPairing>();
        assert_eq!(tc_pair(e, delta, phi, 0.0, &mut out), TcStatus::InvalidArgument);
        assert!(last_error().contains("support"));

        tc_testfn_free(phi);
        tc_dist_free(delta);
        tc_engine_free(e);
        tc_engine_free(ptr::null_mut());
    }
}

#[test]
fn scenario_strings_round_trip() {
    let sc = CString::new(
        r#"{"shape": {"kind": "circle3d"}, "distribution": {"kind": "delta", "degree": 0},
            "testfn": {"kind": "bump"}, "quadrature": {"sigma_level": 8}}"#,
    )
    .unwrap();
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(tc_run_scenario(sc.as_ptr(), false, &mut out), TcStatus::Ok);
        let csv = CStr::from_ptr(out).to_str().unwrap().to_owned();
        tc_string_free(out);
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        let value: f64 = row[5].parse().unwrap();
        assert!((value - 2.0 * PI).abs() < 1e-10, "{csv}");

        let bad = CString::new(r#"{"shape": {"kind": "torus"}}"#).unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(tc_run_scenario(bad.as_ptr(), true, &mut out), TcStatus::Schema);
        assert!(out.is_null());
        assert!(last_error().contains("shape"));
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(tc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
