use std::ffi::{CStr, CString};
use std::ptr;

use gatt_ffi::*;

fn last_error() -> String {
    let p = gatt_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const ATT_TASK: &str = r#"{"policy":[{"type":"constant","value":0}],
    "conditioning":[{"type":"value_set","values":[1]}],
    "learners":{"m":[{"kind":"glm","interaction_order":1}]},"seed":3}"#;

#[test]
fn simulate_estimate_and_read_back() {
    let dgp = CString::new(r#"{"kind":"att_toy"}"#).unwrap();
    let mut frame = ptr::null_mut();
    assert_eq!(unsafe { gatt_frame_simulate(dgp.as_ptr(), 5000, 1, &mut frame) }, GattStatus::Ok);
    assert_eq!(unsafe { gatt_frame_n(frame) }, 5000);
    assert_eq!(unsafe { gatt_frame_tau(frame) }, 1);

    let task = CString::new(ATT_TASK).unwrap();
    let mut results = ptr::null_mut();
    assert_eq!(unsafe { gatt_estimate(frame, task.as_ptr(), &mut results) }, GattStatus::Ok);
    assert_eq!(unsafe { gatt_results_len(results) }, 3);

    let (mut theta, mut se, mut lo, mut hi) = (0.0, 0.0, 0.0, 0.0);
    assert_eq!(unsafe { gatt_results_get(results, 2, &mut theta, &mut se, &mut lo, &mut hi) }, GattStatus::Ok);
    assert!(se > 0.0 && lo < theta && theta < hi);
    assert!((theta - 0.24).abs() < 5.0 * se);

    let (mut t0, mut s0) = (0.0, 0.0);
    assert_eq!(unsafe { gatt_results_get(results, 0, &mut t0, &mut s0, &mut lo, &mut hi) }, GattStatus::Ok);
    assert!(s0.is_nan() && lo.is_nan());
    assert_eq!(
        unsafe { gatt_results_get(results, 3, &mut t0, &mut s0, &mut lo, &mut hi) },
        GattStatus::OutOfRange
    );

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { gatt_results_json(results, &mut json) }, GattStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"tmle\""));
    unsafe {
        gatt_string_free(json);
        gatt_results_free(results);
        gatt_frame_free(frame);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut frame = ptr::null_mut();
    assert_eq!(unsafe { gatt_frame_simulate(ptr::null(), 10, 1, &mut frame) }, GattStatus::NullArgument);
    assert!(last_error().contains("dgp_json"));

    let bad = CString::new(r#"{"kind":"sim2","tau":1}"#).unwrap();
    assert_eq!(unsafe { gatt_frame_simulate(bad.as_ptr(), 10, 1, &mut frame) }, GattStatus::InvalidConfiguration);

    let dgp = CString::new(r#"{"kind":"att_toy"}"#).unwrap();
    assert_eq!(unsafe { gatt_frame_simulate(dgp.as_ptr(), 50, 1, &mut frame) }, GattStatus::Ok);
    let never = CString::new(
        r#"{"policy":[{"type":"constant","value":0}],"conditioning":[{"type":"value_set","values":[7]}]}"#,
    )
    .unwrap();
    let mut results = ptr::null_mut();
    assert_eq!(
        unsafe { gatt_estimate(frame, never.as_ptr(), &mut results) },
        GattStatus::EmptyConditioningStratum
    );
    assert!(last_error().contains("empty conditioning stratum"));
    assert!(results.is_null());
    unsafe { gatt_frame_free(frame) };

    let mut f2 = ptr::null_mut();
    let missing = CString::new("/nonexistent/data.csv").unwrap();
    assert_eq!(unsafe { gatt_frame_from_csv(missing.as_ptr(), GattFamily::Binomial, &mut f2) }, GattStatus::Io);
}

#[test]
fn csv_round_trip_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let frame = gatt::simlab::simulate(&gatt::simlab::Sim1, 40, 2).unwrap();
    frame.to_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { gatt_frame_from_csv(cpath.as_ptr(), GattFamily::Binomial, &mut handle) }, GattStatus::Ok);
    assert_eq!(unsafe { (gatt_frame_n(handle), gatt_frame_tau(handle)) }, (40, 4));
    unsafe { gatt_frame_free(handle) };

    let cfg = CString::new(
        r#"{"dgp":{"kind":"att_toy"},"policy":{"type":"constant","value":0},
            "conditioning":[{"type":"value_set","values":[1]}],"draws":200000,"seed":5}"#,
    )
    .unwrap();
    let (mut theta, mut se) = (0.0, 0.0);
    assert_eq!(unsafe { gatt_true_gatt(cfg.as_ptr(), &mut theta, &mut se) }, GattStatus::Ok);
    assert!((theta - 0.24).abs() < 4.0 * se);
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(gatt_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
