use std::ffi::{CStr, CString};
use std::ptr;

use warpmetric_ffi::*;

fn last_error() -> String {
    let p = wm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn identity(p: usize) -> *mut WmMetric {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { wm_metric_identity(p, WmStructure::Psd, &mut m) },
        WmStatus::Ok
    );
    m
}

#[test]
fn metric_round_trip() {
    let values = [2.0, 0.5, 0.5, 1.0];
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(
            wm_metric_new(values.as_ptr(), 2, WmStructure::Psd, &mut m),
            WmStatus::Ok
        );
        assert_eq!(wm_metric_dim(m), 2);
        let mut out = [0.0; 4];
        assert_eq!(wm_metric_values(m, out.as_mut_ptr(), 4), WmStatus::Ok);
        assert_eq!(out, values);
        assert_eq!(
            wm_metric_values(m, out.as_mut_ptr(), 3),
            WmStatus::BufferTooSmall
        );

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("w.txt").to_str().unwrap()).unwrap();
        assert_eq!(wm_metric_save(m, path.as_ptr()), WmStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(wm_metric_load(path.as_ptr(), &mut back), WmStatus::Ok);
        let mut again = [0.0; 4];
        wm_metric_values(back, again.as_mut_ptr(), 4);
        assert_eq!(again, values);
        wm_metric_free(back);
        wm_metric_free(m);
    }
}

#[test]
fn invalid_inputs_report_status_and_message() {
    unsafe {
        let mut m = ptr::null_mut();
        let asym = [1.0, 2.0, 0.0, 1.0];
        let status = wm_metric_new(asym.as_ptr(), 2, WmStructure::Psd, &mut m);
        assert_ne!(status, WmStatus::Ok);
        assert!(m.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(
            wm_metric_new(ptr::null(), 2, WmStructure::Psd, &mut m),
            WmStatus::NullPointer
        );
        assert!(last_error().contains("values"));

        let missing = CString::new("/nonexistent/w.txt").unwrap();
        assert_eq!(wm_metric_load(missing.as_ptr(), &mut m), WmStatus::Data);
        assert_eq!(wm_metric_dim(ptr::null()), 0);
        wm_metric_free(ptr::null_mut());
    }
}

#[test]
fn affinity_and_decode() {
    let a = [0.0, 1.0, 2.0];
    let b = [0.0, 2.0];
    let m = identity(1);
    let mut c = [0.0; 6];
    unsafe {
        assert_eq!(
            wm_affinity(a.as_ptr(), 3, b.as_ptr(), 2, 1, m, c.as_mut_ptr(), 6),
            WmStatus::Ok
        );
        assert_eq!(c, [0.0, -4.0, -1.0, -1.0, -4.0, 0.0]);
        let mut steps = [0usize; 8];
        let (mut len, mut score) = (0usize, 0.0);
        assert_eq!(
            wm_decode(
                c.as_ptr(),
                3,
                2,
                -1,
                steps.as_mut_ptr(),
                4,
                &mut len,
                &mut score
            ),
            WmStatus::Ok
        );
        assert_eq!(len, 3);
        assert_eq!(&steps[..6], &[1, 1, 2, 1, 3, 2]);
        assert_eq!(score, -1.0);
        assert_eq!(
            wm_decode(
                c.as_ptr(),
                3,
                2,
                -1,
                steps.as_mut_ptr(),
                2,
                &mut len,
                &mut score
            ),
            WmStatus::BufferTooSmall
        );
        assert_eq!(len, 3);
        wm_metric_free(m);
    }
}

#[test]
fn losses_between_paths() {
    let diagonal = [1usize, 1, 2, 2, 3, 3];
    let late = [1usize, 1, 2, 1, 3, 2, 3, 3];
    let mut out = WmLosses::default();
    unsafe {
        assert_eq!(
            wm_losses(diagonal.as_ptr(), 3, late.as_ptr(), 4, 3, 3, &mut out),
            WmStatus::Ok
        );
        assert_eq!(out.hamming, 3.0);
        assert!((out.delta_abs - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(out.delta_max, 1.0);
        assert!(out.sym_area > 0.0);

        let broken = [1usize, 1, 3, 3];
        assert_eq!(
            wm_losses(diagonal.as_ptr(), 3, broken.as_ptr(), 2, 3, 3, &mut out),
            WmStatus::InvalidArgument
        );
    }
}

#[test]
fn train_and_evaluate() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(wm_dataset_new(&mut ds), WmStatus::Ok);
        for t in [5usize, 6, 7] {
            let a: Vec<f64> = (0..t * 2).map(|k| (k as f64 * 0.9).sin()).collect();
            let truth: Vec<usize> = (1..=t).flat_map(|i| [i, i]).collect();
            assert_eq!(
                wm_dataset_add_pair(ds, a.as_ptr(), t, a.as_ptr(), t, 2, truth.as_ptr(), t),
                WmStatus::Ok
            );
        }
        assert_eq!(wm_dataset_len(ds), 3);

        let mut config = std::mem::zeroed::<WmTrainConfig>();
        assert_eq!(wm_train_config_default(&mut config), WmStatus::Ok);
        assert_eq!(config.lambda, 0.01);
        config.steps = 20;
        config.structure = WmStructure::DiagonalNonneg;
        let mut w = ptr::null_mut();
        assert_eq!(wm_train(ds, &config, &mut w), WmStatus::Ok);
        assert_eq!(wm_metric_dim(w), 2);

        let mut scores = WmLosses::default();
        assert_eq!(wm_evaluate(ds, w, -1, &mut scores), WmStatus::Ok);
        assert_eq!(scores.delta_abs, 0.0);

        config.lambda = -1.0;
        let mut bad = ptr::null_mut();
        assert_eq!(wm_train(ds, &config, &mut bad), WmStatus::InvalidArgument);
        assert!(bad.is_null());

        let mut empty = ptr::null_mut();
        wm_dataset_new(&mut empty);
        config.lambda = 0.01;
        assert_eq!(wm_train(empty, &config, &mut bad), WmStatus::Data);

        wm_metric_free(w);
        wm_dataset_free(ds);
        wm_dataset_free(empty);
    }
}
