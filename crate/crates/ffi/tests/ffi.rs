use std::ffi::{c_char, CStr, CString};
use std::ptr;

use efflab_ffi::*;

fn last_error() -> String {
    let p = efflab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn binomial(u: f64, d: f64) -> *mut EfflabLattice {
    let mut l = ptr::null_mut();
    assert_eq!(unsafe { efflab_lattice_binomial(1.0, u, d, 0.5, &mut l) }, EfflabStatus::Ok);
    l
}

#[test]
fn binomial_log_fraction_is_one_half() {
    let l = binomial(2.0, 0.5);
    let (mut v, mut pi) = (0.0, 0.0);
    let st = unsafe { efflab_solve_utility(l, EfflabUtility::Log as u32, 0.0, 1.0, true, &mut v, &mut pi) };
    assert_eq!(st, EfflabStatus::Ok);
    assert!((pi - 0.5).abs() < 1e-12);
    // E[log(1 + pi r)] with r = 1, -1/2.
    let closed = 0.5 * 1.5f64.ln() + 0.5 * 0.75f64.ln();
    assert!((v - closed).abs() < 1e-12);
    let mut gap = 1.0;
    assert_eq!(unsafe { efflab_conjugacy_gap(l, EfflabUtility::Log as u32, 0.0, 1.0, true, &mut gap) }, EfflabStatus::Ok);
    assert!(gap < 1e-8);
    unsafe { efflab_lattice_free(l) };
}

#[test]
fn up_only_is_unbounded_with_message() {
    let l = binomial(3.0, 1.0);
    let st = unsafe { efflab_solve_utility(l, 0, 0.0, 1.0, true, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, EfflabStatus::Unbounded);
    assert!(last_error().contains("unbounded"));
    let mut c = EfflabClassification::default();
    assert_eq!(unsafe { efflab_lattice_classify(l, 1e-9, &mut c) }, EfflabStatus::Ok);
    assert!(!c.na_c && !c.m_sup && c.consistent);
    unsafe { efflab_lattice_free(l) };
}

#[test]
fn bad_inputs_map_to_codes() {
    let mut l = ptr::null_mut();
    assert_eq!(unsafe { efflab_lattice_binomial(1.0, 2.0, 0.5, 1.5, &mut l) }, EfflabStatus::InvalidArgument);
    assert!(l.is_null());
    assert_eq!(unsafe { efflab_lattice_n_nodes(ptr::null(), ptr::null_mut()) }, EfflabStatus::NullPointer);
    let junk = CString::new("{not json").unwrap();
    assert_eq!(unsafe { efflab_lattice_from_json(junk.as_ptr(), &mut l) }, EfflabStatus::Parse);
    let b = binomial(2.0, 0.5);
    let st = unsafe { efflab_solve_utility(b, 7, 0.0, 1.0, true, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, EfflabStatus::InvalidArgument);
    // A successful call clears the message.
    let mut n = 0;
    assert_eq!(unsafe { efflab_lattice_n_nodes(b, &mut n) }, EfflabStatus::Ok);
    assert_eq!(n, 3);
    assert!(efflab_last_error().is_null());
    unsafe { efflab_lattice_free(b) };
}

#[test]
fn json_round_trip() {
    let l = binomial(2.0, 0.5);
    let mut s: *mut c_char = ptr::null_mut();
    assert_eq!(unsafe { efflab_lattice_to_json(l, &mut s) }, EfflabStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { efflab_lattice_from_json(s, &mut back) }, EfflabStatus::Ok);
    let mut n = 0;
    unsafe { efflab_lattice_n_nodes(back, &mut n) };
    assert_eq!(n, 3);
    unsafe {
        efflab_string_free(s);
        efflab_lattice_free(back);
        efflab_lattice_free(l);
    }
}

#[test]
fn experiment_through_the_boundary() {
    let cfg = CString::new(
        r#"{"experiment":"lattice-duality","grid":{"ups":[2.0,3.0],"downs":[0.5,1.0],"n_random":10,"max_depth":2,"seed":3}}"#,
    )
    .unwrap();
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { efflab_experiment_run(cfg.as_ptr(), &mut e) }, EfflabStatus::Ok);
    let mut ok = false;
    assert_eq!(unsafe { efflab_experiment_passed(e, &mut ok) }, EfflabStatus::Ok);
    assert!(ok);
    let mut need = 0;
    let st = unsafe { efflab_experiment_artifact(e, 0, ptr::null_mut(), 0, &mut need) };
    assert_eq!(st, EfflabStatus::BufferTooSmall);
    let mut buf = vec![0 as c_char; need];
    assert_eq!(unsafe { efflab_experiment_artifact(e, 0, buf.as_mut_ptr(), need, &mut need) }, EfflabStatus::Ok);
    let csv = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert!(csv.starts_with("# config: "));
    assert_eq!(csv.lines().count(), 2 + 14);
    let mut j = ptr::null_mut();
    assert_eq!(unsafe { efflab_experiment_to_json(e, &mut j) }, EfflabStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(j) }.to_str().unwrap()).unwrap();
    assert_eq!(v["experiment"], "lattice-duality");
    unsafe {
        efflab_string_free(j);
        efflab_experiment_free(e);
    }
}

#[test]
fn invalid_config_is_reported() {
    let cfg = CString::new(r#"{"experiment":"nope"}"#).unwrap();
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { efflab_experiment_run(cfg.as_ptr(), &mut e) }, EfflabStatus::InvalidArgument);
    assert!(last_error().contains("experiment"));
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(efflab_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
