use std::ffi::{CStr, CString};
use std::ptr;

use autopl_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(autopl_last_error_message()) }.to_str().unwrap().to_string()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(autopl_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let mut out = ptr::null_mut();
    let st = unsafe { autopl_dataset_synthetic(ptr::null(), 10, 0, &mut out) };
    assert_eq!(st, AutoplStatus::NullPointer);
    assert!(last_error().contains("model"));
    assert!(out.is_null());
    let st = unsafe { autopl_fspl_1m(1e9, ptr::null_mut()) };
    assert_eq!(st, AutoplStatus::NullPointer);
    assert_eq!(unsafe { autopl_dataset_rows(ptr::null()) }, 0);
    unsafe { autopl_dataset_free(ptr::null_mut()) };
}

#[test]
fn error_classes_map_to_status_codes() {
    let mut out = ptr::null_mut();
    let m = c("nope");
    assert_eq!(unsafe { autopl_dataset_synthetic(m.as_ptr(), 10, 0, &mut out) }, AutoplStatus::Config);
    let p = c("/nonexistent/file.csv");
    assert_eq!(unsafe { autopl_dataset_read_csv(p.as_ptr(), &mut out) }, AutoplStatus::Data);
    let mut v = 0.0;
    assert_eq!(unsafe { autopl_eval_fs(868.0, -1.0, &mut v) }, AutoplStatus::Data);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { autopl_eval_fs(868.0, 1.0, &mut v) }, AutoplStatus::Ok);
    assert!(last_error().is_empty());
}

#[test]
fn model_wrappers_agree_with_library() {
    let mut v = 0.0;
    unsafe { autopl_fspl_1m(28e9, &mut v) };
    assert_eq!(v, autopl::plmodels::fspl_1m(28e9).unwrap());
    unsafe { autopl_eval_ci(28e9, 2.0, 100.0, 0.0, &mut v) };
    assert_eq!(v, autopl::plmodels::fspl_1m(28e9).unwrap() + 40.0);
    unsafe { autopl_eval_abg(2.0, 30.0, 2.0, 28.0, 10.0, 0.0, &mut v) };
    let expected = 20.0 + 30.0 + 20.0 * 28f64.log10();
    assert!((v - expected).abs() < 1e-12);
}

#[test]
fn dataset_round_trip() {
    let mut ds = ptr::null_mut();
    let m = c("ci");
    assert_eq!(unsafe { autopl_dataset_synthetic(m.as_ptr(), 50, 3, &mut ds) }, AutoplStatus::Ok);
    let (n, f) = unsafe { (autopl_dataset_rows(ds), autopl_dataset_features(ds)) };
    assert_eq!(n, 50);
    let mut target = vec![0.0; n];
    let mut matrix = vec![0.0; n * f];
    unsafe {
        assert_eq!(autopl_dataset_target(ds, target.as_mut_ptr()), AutoplStatus::Ok);
        assert_eq!(autopl_dataset_matrix(ds, matrix.as_mut_ptr()), AutoplStatus::Ok);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("d.csv").to_str().unwrap());
    let mut back = ptr::null_mut();
    unsafe {
        assert_eq!(autopl_dataset_write_csv(ds, path.as_ptr()), AutoplStatus::Ok);
        assert_eq!(autopl_dataset_read_csv(path.as_ptr(), &mut back), AutoplStatus::Ok);
    }
    let mut t2 = vec![0.0; n];
    unsafe { autopl_dataset_target(back, t2.as_mut_ptr()) };
    assert_eq!(target, t2);
    unsafe {
        autopl_dataset_free(ds);
        autopl_dataset_free(back);
    }
}

#[test]
fn expression_parse_evaluate_and_infix() {
    let toks = c("add mul const x0 x1");
    let k = [3.0];
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { autopl_expression_parse(toks.as_ptr(), k.as_ptr(), 1, &mut e) }, AutoplStatus::Ok);
    assert_eq!(unsafe { autopl_expression_placeholders(e) }, 1);
    let rows = [1.0, 2.0, 4.0, -1.0];
    let mut out = [0.0; 2];
    assert_eq!(unsafe { autopl_expression_evaluate(e, rows.as_ptr(), 2, 2, out.as_mut_ptr()) }, AutoplStatus::Ok);
    assert_eq!(out, [5.0, 11.0]);

    let mut len = 0;
    unsafe { autopl_expression_infix(e, ptr::null_mut(), 0, &mut len) };
    let mut buf = vec![0 as std::ffi::c_char; len + 1];
    unsafe { autopl_expression_infix(e, buf.as_mut_ptr(), buf.len(), &mut len) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert_eq!(s.len(), len);
    assert!(s.contains("x0") && s.contains("x1"));

    let mut short = [0 as std::ffi::c_char; 4];
    unsafe { autopl_expression_infix(e, short.as_mut_ptr(), 4, &mut len) };
    assert_eq!(unsafe { CStr::from_ptr(short.as_ptr()) }.to_bytes().len(), 3);
    unsafe { autopl_expression_free(e) };

    let bad = c("add x0");
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { autopl_expression_parse(bad.as_ptr(), ptr::null(), 0, &mut e) }, AutoplStatus::Config);
}

#[test]
fn shape_mismatch_is_a_data_error() {
    let toks = c("add x0 x3");
    let mut e = ptr::null_mut();
    unsafe { autopl_expression_parse(toks.as_ptr(), ptr::null(), 0, &mut e) };
    let rows = [1.0, 2.0];
    let mut out = [0.0; 1];
    assert_eq!(unsafe { autopl_expression_evaluate(e, rows.as_ptr(), 1, 2, out.as_mut_ptr()) }, AutoplStatus::Data);
    unsafe { autopl_expression_free(e) };
}

fn verdict_of(ds: *const AutoplDataset, tokens: &str) -> AutoplVerdict {
    let toks = c(tokens);
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { autopl_expression_parse(toks.as_ptr(), ptr::null(), 0, &mut e) }, AutoplStatus::Ok);
    let mut v = AutoplVerdict::NotApplicable;
    assert_eq!(unsafe { autopl_validity_check(e, ds, &mut v) }, AutoplStatus::Ok);
    unsafe { autopl_expression_free(e) };
    v
}

#[test]
fn validity_needs_distance_and_frequency() {
    let mut ds = ptr::null_mut();
    let m = c("ci");
    unsafe { autopl_dataset_synthetic(m.as_ptr(), 100, 1, &mut ds) };
    let names = autopl::plmodels::SyntheticSpec::new(autopl::plmodels::ModelKind::Ci, 1, 0).feature_names();
    let d = names.iter().position(|n| n == "d").unwrap();
    let f = names.iter().position(|n| n == "f").unwrap();
    assert_eq!(verdict_of(ds, &format!("add log10 x{f} log10 x{d}")), AutoplVerdict::Valid);
    assert_eq!(verdict_of(ds, &format!("log10 x{d}")), AutoplVerdict::Invalid);
    assert_eq!(verdict_of(ds, &format!("add log10 x{f} sin x{d}")), AutoplVerdict::Invalid);
    unsafe { autopl_dataset_free(ds) };
}

#[test]
fn kan_train_save_load_predict() {
    let mut ds = ptr::null_mut();
    let m = c("ci");
    unsafe { autopl_dataset_synthetic(m.as_ptr(), 120, 2, &mut ds) };
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { autopl_kan_train(ds, ptr::null(), 20, 0, &mut k) }, AutoplStatus::Ok, "{}", last_error());
    let f = unsafe { autopl_dataset_features(ds) };
    assert_eq!(unsafe { autopl_kan_inputs(k) }, f);
    let mut x = vec![0.0; 120 * f];
    unsafe { autopl_dataset_matrix(ds, x.as_mut_ptr()) };
    let mut a = vec![0.0; 120];
    assert_eq!(unsafe { autopl_kan_predict(k, x.as_ptr(), 120, f, a.as_mut_ptr()) }, AutoplStatus::Ok);
    assert!(a.iter().all(|v| v.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("k.json").to_str().unwrap());
    let mut k2 = ptr::null_mut();
    unsafe {
        assert_eq!(autopl_kan_save(k, path.as_ptr()), AutoplStatus::Ok);
        assert_eq!(autopl_kan_load(path.as_ptr(), &mut k2), AutoplStatus::Ok);
    }
    let mut b = vec![0.0; 120];
    unsafe { autopl_kan_predict(k2, x.as_ptr(), 120, f, b.as_mut_ptr()) };
    assert_eq!(a, b);
    unsafe {
        autopl_kan_free(k);
        autopl_kan_free(k2);
        autopl_dataset_free(ds);
    }
}

#[test]
fn dsr_train_returns_expression_over_raw_inputs() {
    let mut ds = ptr::null_mut();
    let m = c("ci");
    unsafe { autopl_dataset_synthetic(m.as_ptr(), 60, 4, &mut ds) };
    let (mut e, mut r) = (ptr::null_mut(), -1.0);
    let p = c("rspg");
    assert_eq!(
        unsafe { autopl_dsr_train(ds, p.as_ptr(), 100, 0, &mut e, &mut r) },
        AutoplStatus::Ok,
        "{}",
        last_error()
    );
    assert!((0.0..=1.0).contains(&r));
    let f = unsafe { autopl_dataset_features(ds) };
    let mut x = vec![0.0; 60 * f];
    unsafe { autopl_dataset_matrix(ds, x.as_mut_ptr()) };
    let mut out = vec![0.0; 60];
    assert_eq!(unsafe { autopl_expression_evaluate(e, x.as_ptr(), 60, f, out.as_mut_ptr()) }, AutoplStatus::Ok);
    let bad = c("sgd");
    let mut e2 = ptr::null_mut();
    assert_eq!(unsafe { autopl_dsr_train(ds, bad.as_ptr(), 100, 0, &mut e2, &mut r) }, AutoplStatus::Config);
    unsafe {
        autopl_expression_free(e);
        autopl_dataset_free(ds);
    }
}
