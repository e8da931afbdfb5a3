use std::ffi::CStr;
use std::ptr;

use grpcoll::nn::{build_mlp, save_model};
use grpcoll::projection::{generate_projection, project};
use grpcoll_ffi::*;
use proptest::prelude::*;

fn key(k: usize, d: usize, seed: u64) -> *mut GrpKey {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { grp_key_generate(k, d, seed, &mut out) },
        GrpStatus::Ok
    );
    assert!(!out.is_null());
    out
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    unsafe { grp_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn ffi_project(key: *const GrpKey, x: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    let status = unsafe { grp_key_project(key, x.as_ptr(), x.len(), y.as_mut_ptr(), y.len()) };
    assert_eq!(status, GrpStatus::Ok);
    y
}

proptest! {
    #[test]
    fn projection_matches_the_library(k in 1usize..8, extra in 0usize..8, seed in any::<u64>(),
                                      x in prop::collection::vec(-10.0f64..10.0, 16)) {
        let d = k + extra;
        let x = &x[..d];
        let h = key(k, d, seed);
        let expected = project(&generate_projection(k, d, seed).unwrap(), x).unwrap();
        prop_assert_eq!(ffi_project(h, x, k), expected);
        unsafe { grp_key_free(h) };
    }
}

#[test]
fn dims_and_compression_ratio() {
    let h = key(4, 10, 3);
    let (mut k, mut d) = (0, 0);
    assert_eq!(unsafe { grp_key_dims(h, &mut k, &mut d) }, GrpStatus::Ok);
    assert_eq!((k, d), (4, 10));
    assert_eq!(unsafe { grp_key_compression_ratio(h) }, 2.5);
    assert!(unsafe { grp_key_compression_ratio(ptr::null()) }.is_nan());
    unsafe { grp_key_free(h) };
}

#[test]
fn export_import_round_trip() {
    let h = key(3, 7, 9);
    let mut len = 0;
    let status = unsafe { grp_key_export(h, ptr::null_mut(), 0, &mut len) };
    assert_eq!(status, GrpStatus::BufferTooSmall);
    // 16-byte header plus k*d little-endian doubles
    assert_eq!(len, 16 + 3 * 7 * 8);
    let mut blob = vec![0u8; len];
    assert_eq!(
        unsafe { grp_key_export(h, blob.as_mut_ptr(), blob.len(), &mut len) },
        GrpStatus::Ok
    );
    assert_eq!(&blob[..4], b"GRPM");

    let mut back = ptr::null_mut();
    assert_eq!(
        unsafe { grp_key_import(blob.as_ptr(), blob.len(), true, &mut back) },
        GrpStatus::Ok
    );
    let x = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5, -1.0];
    assert_eq!(ffi_project(h, &x, 3), ffi_project(back, &x, 3));
    unsafe {
        grp_key_free(h);
        grp_key_free(back);
    }
}

#[test]
fn malformed_blob_is_a_format_error() {
    let blob = *b"XXXX\x01\x00\x01\x00\x01\x00\x00\x00\x00\x00\x00\x00";
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { grp_key_import(blob.as_ptr(), blob.len(), true, &mut out) },
        GrpStatus::Format
    );
    assert!(out.is_null());
    assert!(last_error().contains("magic"), "{}", last_error());
    assert_eq!(
        unsafe { grp_key_import(blob.as_ptr(), 5, true, &mut out) },
        GrpStatus::Format
    );
}

#[test]
fn argument_errors() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { grp_key_generate(5, 4, 1, &mut out) },
        GrpStatus::InvalidDimension
    );
    assert_eq!(
        unsafe { grp_key_generate(2, 4, 1, ptr::null_mut()) },
        GrpStatus::NullPointer
    );

    let x = [1.0; 4];
    let mut y = [0.0; 2];
    let status = unsafe { grp_key_project(ptr::null(), x.as_ptr(), 4, y.as_mut_ptr(), 2) };
    assert_eq!(status, GrpStatus::NullPointer);
    assert_eq!(last_error(), "key is null");

    let h = key(2, 4, 1);
    let status = unsafe { grp_key_project(h, x.as_ptr(), 3, y.as_mut_ptr(), 2) };
    assert_eq!(status, GrpStatus::InvalidDimension);
    let mut short = [0.0; 1];
    let status = unsafe { grp_key_project(h, x.as_ptr(), 4, short.as_mut_ptr(), 1) };
    assert_eq!(status, GrpStatus::InvalidDimension);
    unsafe { grp_key_free(h) };
}

#[test]
fn error_message_truncates_and_reports_full_length() {
    let mut out = ptr::null_mut();
    unsafe { grp_key_generate(0, 4, 1, &mut out) };
    let full = grp_last_error_length();
    assert!(full > 8);
    let mut buf = [0x7f as std::ffi::c_char; 6];
    assert_eq!(
        unsafe { grp_last_error_message(buf.as_mut_ptr(), buf.len()) },
        full
    );
    assert_eq!(buf[5], 0);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 5);
}

#[test]
fn noise_is_seeded_and_has_laplace_scale() {
    let x = vec![0.0; 20_000];
    let mut a = vec![0.0; x.len()];
    let mut b = vec![0.0; x.len()];
    let run = |seed, out: &mut [f64]| unsafe {
        grp_noisify(x.as_ptr(), x.len(), 4.0, 2.0, seed, out.as_mut_ptr())
    };
    assert_eq!(run(5, &mut a), GrpStatus::Ok);
    assert_eq!(run(5, &mut b), GrpStatus::Ok);
    assert_eq!(a, b);
    assert_eq!(run(6, &mut b), GrpStatus::Ok);
    assert_ne!(a, b);
    // E|Lap(b)| = b = 2 / 4; the sample mean's std error is b / sqrt(n)
    let mean_abs = a.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64;
    assert!(
        (mean_abs - 0.5).abs() < 5.0 * 0.5 / (a.len() as f64).sqrt(),
        "{mean_abs}"
    );

    let status = unsafe { grp_noisify(x.as_ptr(), 1, 0.0, 2.0, 1, a.as_mut_ptr()) };
    assert_eq!(status, GrpStatus::InvalidArgument);
}

#[test]
fn predicted_variance_by_hand() {
    // ||x||^2 = 5, so ((5 + 1) / 2, (5 + 4) / 2)
    let x = [1.0, 2.0];
    let mut v = [0.0; 2];
    assert_eq!(
        unsafe { grp_predicted_variance(x.as_ptr(), 2, 2, v.as_mut_ptr()) },
        GrpStatus::Ok
    );
    assert_eq!(v, [3.0, 4.5]);
    assert_eq!(
        unsafe { grp_predicted_variance(x.as_ptr(), 2, 0, v.as_mut_ptr()) },
        GrpStatus::InvalidDimension
    );
}

#[test]
fn condition_numbers_by_hand() {
    let mut c = 0.0;
    // diag(1, 2): sqrt(5) * sqrt(1 + 1/4) = 2.5
    let m = [1.0, 0.0, 0.0, 2.0];
    assert_eq!(
        unsafe { grp_condition_number(m.as_ptr(), 2, 2, &mut c) },
        GrpStatus::Ok
    );
    assert!((c - 2.5).abs() < 1e-12, "{c}");
    let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    assert_eq!(
        unsafe { grp_condition_number(eye.as_ptr(), 3, 3, &mut c) },
        GrpStatus::Ok
    );
    assert!((c - 3.0).abs() < 1e-12);
    let zero = [0.0; 4];
    assert_eq!(
        unsafe { grp_condition_number(zero.as_ptr(), 2, 2, &mut c) },
        GrpStatus::Numeric
    );
}

#[test]
fn loaded_model_classifies_like_the_original() {
    let model = build_mlp(3, &[5], 4, 0.0, 8).unwrap();
    let blob = save_model(&model);
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { grp_model_load(blob.as_ptr(), blob.len(), &mut h) },
        GrpStatus::Ok
    );
    let (mut dim, mut classes) = (0, 0);
    assert_eq!(
        unsafe { grp_model_shape(h, &mut dim, &mut classes) },
        GrpStatus::Ok
    );
    assert_eq!((dim, classes), (3, 4));

    let x = [0.3, -1.2, 2.0];
    let (label, probs) = model.classify(&x).unwrap();
    let mut got = 99;
    let mut p = [0.0; 4];
    let status = unsafe { grp_model_classify(h, x.as_ptr(), 3, &mut got, p.as_mut_ptr(), 4) };
    assert_eq!(status, GrpStatus::Ok);
    assert_eq!(got, label);
    assert_eq!(p.to_vec(), probs);
    let status = unsafe { grp_model_classify(h, x.as_ptr(), 3, &mut got, ptr::null_mut(), 0) };
    assert_eq!(status, GrpStatus::Ok);
    let status = unsafe { grp_model_classify(h, x.as_ptr(), 2, &mut got, ptr::null_mut(), 0) };
    assert_ne!(status, GrpStatus::Ok);
    unsafe { grp_model_free(h) };

    let mut bad = ptr::null_mut();
    assert_eq!(
        unsafe { grp_model_load(blob.as_ptr(), 10, &mut bad) },
        GrpStatus::Format
    );
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(grp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
