//! Exercises the C surface from Rust: handle lifecycle, status codes, and
//! buffer contracts.

use std::ffi::CString;

use dpat_ffi::*;

fn default_config() -> DpatModelConfig {
    let mut cfg = std::mem::MaybeUninit::uninit();
    let status = unsafe { dpat_model_config_default(cfg.as_mut_ptr()) };
    assert_eq!(status, DpatStatus::Ok);
    unsafe { cfg.assume_init() }
}

fn c_path(path: &std::path::Path) -> CString {
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn version_and_status_messages_are_static_strings() {
    let v = unsafe { std::ffi::CStr::from_ptr(dpat_version()) };
    assert!(!v.to_str().unwrap().is_empty());
    let m = unsafe { std::ffi::CStr::from_ptr(dpat_status_message(DpatStatus::Io)) };
    assert_eq!(m.to_str().unwrap(), "i/o error");
}

#[test]
fn null_pointers_are_rejected() {
    unsafe {
        assert_eq!(
            dpat_model_config_default(std::ptr::null_mut()),
            DpatStatus::NullPointer
        );
        let cfg = default_config();
        assert_eq!(
            dpat_model_create(&cfg, std::ptr::null_mut()),
            DpatStatus::NullPointer
        );
        assert_eq!(
            dpat_model_create(std::ptr::null(), std::ptr::null_mut()),
            DpatStatus::NullPointer
        );
        assert_eq!(dpat_model_param_count(std::ptr::null()), 0);
        dpat_model_free(std::ptr::null_mut()); // no-op
        assert_eq!(
            dpat_sample_frame_indices(10, 4, std::ptr::null_mut()),
            DpatStatus::NullPointer
        );
    }
}

#[test]
fn model_lifecycle_and_param_count() {
    let mut cfg = default_config();
    cfg.height = 16;
    cfg.width = 16;
    unsafe {
        let mut handle: *mut DpatModel = std::ptr::null_mut();
        assert_eq!(dpat_model_create(&cfg, &mut handle), DpatStatus::Ok);
        assert!(!handle.is_null());
        let full = dpat_model_param_count(handle);
        assert!(full > 0);
        dpat_model_free(handle);

        let mut slim_cfg = cfg;
        slim_cfg.use_ima = false;
        slim_cfg.use_ifa = false;
        let mut slim: *mut DpatModel = std::ptr::null_mut();
        assert_eq!(dpat_model_create(&slim_cfg, &mut slim), DpatStatus::Ok);
        assert!(dpat_model_param_count(slim) < full);
        dpat_model_free(slim);
    }
}

#[test]
fn invalid_resolution_is_invalid_argument() {
    let mut cfg = default_config();
    cfg.height = 30;
    unsafe {
        let mut handle: *mut DpatModel = std::ptr::null_mut();
        assert_eq!(dpat_model_create(&cfg, &mut handle), DpatStatus::InvalidArgument);
        assert!(handle.is_null());
    }
}

#[test]
fn sample_frame_indices_matches_formula() {
    let mut out = [0u32; 4];
    let status = unsafe { dpat_sample_frame_indices(10, 4, out.as_mut_ptr()) };
    assert_eq!(status, DpatStatus::Ok);
    assert_eq!(out, [0, 3, 6, 9]);
    // N > L is rejected
    let status = unsafe { dpat_sample_frame_indices(3, 4, out.as_mut_ptr()) };
    assert_eq!(status, DpatStatus::InvalidArgument);
}

#[test]
fn save_load_round_trip_preserves_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = c_path(&dir.path().join("model.dpat"));
    let mut cfg = default_config();
    cfg.height = 16;
    cfg.width = 16;
    cfg.seed = 11;
    unsafe {
        let mut a: *mut DpatModel = std::ptr::null_mut();
        assert_eq!(dpat_model_create(&cfg, &mut a), DpatStatus::Ok);
        assert_eq!(dpat_model_save(a, ckpt.as_ptr()), DpatStatus::Ok);

        let mut b: *mut DpatModel = std::ptr::null_mut();
        assert_eq!(dpat_model_load(ckpt.as_ptr(), &cfg, &mut b), DpatStatus::Ok);
        assert_eq!(dpat_model_param_count(a), dpat_model_param_count(b));
        dpat_model_free(a);
        dpat_model_free(b);

        // loading with a mismatched architecture fails validation
        let mut bad_cfg = cfg;
        bad_cfg.use_ifa = false;
        let mut c: *mut DpatModel = std::ptr::null_mut();
        assert_eq!(
            dpat_model_load(ckpt.as_ptr(), &bad_cfg, &mut c),
            DpatStatus::Validation
        );
        // missing file is an I/O error
        let missing = c_path(&dir.path().join("nope.dpat"));
        assert_eq!(
            dpat_model_load(missing.as_ptr(), &cfg, &mut c),
            DpatStatus::Io
        );
    }
}

#[test]
fn dataset_generation_inference_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let root = c_path(dir.path());
    unsafe {
        assert_eq!(
            dpat_generate_dataset(root.as_ptr(), 5, 2, 6, 32, 32, 0.5),
            DpatStatus::Ok
        );
        let mut count = 0u32;
        assert_eq!(dpat_dataset_video_count(root.as_ptr(), &mut count), DpatStatus::Ok);
        assert_eq!(count, 2);

        let mut id_buf = [0i8; 32];
        let (mut len, mut h, mut w) = (0u32, 0u32, 0u32);
        assert_eq!(
            dpat_dataset_video_info(
                root.as_ptr(),
                0,
                id_buf.as_mut_ptr() as *mut _,
                id_buf.len() as u32,
                &mut len,
                &mut h,
                &mut w,
            ),
            DpatStatus::Ok
        );
        assert_eq!((len, h, w), (6, 32, 32));
        let id = std::ffi::CStr::from_ptr(id_buf.as_ptr() as *const _);
        assert_eq!(id.to_str().unwrap(), "vid0000");

        // out-of-range index
        assert_eq!(
            dpat_dataset_video_info(
                root.as_ptr(),
                9,
                id_buf.as_mut_ptr() as *mut _,
                id_buf.len() as u32,
                &mut len,
                &mut h,
                &mut w,
            ),
            DpatStatus::InvalidArgument
        );

        let mut cfg = default_config();
        cfg.height = 32;
        cfg.width = 32;
        let mut model: *mut DpatModel = std::ptr::null_mut();
        assert_eq!(dpat_model_create(&cfg, &mut model), DpatStatus::Ok);

        let need = (len * h * w) as usize;
        let mut masks_a = vec![0xFFu8; need];
        let mut masks_b = vec![0u8; need];
        let vid = CString::new("vid0000").unwrap();
        // short buffer is rejected
        assert_eq!(
            dpat_infer_video(model, root.as_ptr(), vid.as_ptr(), 2, masks_a.as_mut_ptr(), 3),
            DpatStatus::InvalidArgument
        );
        assert_eq!(
            dpat_infer_video(model, root.as_ptr(), vid.as_ptr(), 2, masks_a.as_mut_ptr(), need as u64),
            DpatStatus::Ok
        );
        assert_eq!(
            dpat_infer_video(model, root.as_ptr(), vid.as_ptr(), 2, masks_b.as_mut_ptr(), need as u64),
            DpatStatus::Ok
        );
        assert!(masks_a.iter().all(|&v| v <= 1));
        assert_eq!(masks_a, masks_b, "inference must be deterministic");

        let (mut j, mut f, mut g) = (0.0f64, 0.0f64, 0.0f64);
        assert_eq!(
            dpat_evaluate_masks(
                masks_a.as_ptr(),
                masks_a.as_ptr(),
                len,
                h,
                w,
                &mut j,
                &mut f,
                &mut g,
            ),
            DpatStatus::Ok
        );
        assert_eq!((j, f, g), (1.0, 1.0, 1.0));

        dpat_model_free(model);
    }
}
