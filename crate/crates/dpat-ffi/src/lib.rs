//! C ABI over the segmentation pipeline: opaque model handles, status codes,
//! and flat buffers.
//!
//! Conventions: every fallible call returns [`DpatStatus`]; outputs go
//! through caller-supplied pointers. Strings are NUL-terminated UTF-8.
//! Handles returned by `dpat_model_create` / `dpat_model_load` are freed
//! with `dpat_model_free` and are safe to share across threads for reading.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dpat_core::data;
use dpat_core::network::{infer_video, DpaModel, ModelConfig};
use dpat_core::{metrics, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpatStatus {
    Ok = 0,
    /// An argument was out of range or otherwise unusable.
    InvalidArgument = 1,
    /// Filesystem failure; details go to stderr.
    Io = 2,
    /// On-disk data failed validation.
    Validation = 3,
    /// An API contract was violated.
    Contract = 4,
    /// A required pointer was NULL.
    NullPointer = 5,
    /// A string argument was not valid UTF-8.
    Utf8 = 6,
    /// The callee panicked; state may be inconsistent.
    Panic = 7,
}

fn status_of(err: &Error) -> DpatStatus {
    match err {
        Error::Io { .. } => DpatStatus::Io,
        Error::Validation(_) => DpatStatus::Validation,
        Error::Contract(_) => DpatStatus::Contract,
        Error::InvalidArgument(_) | Error::ShapeMismatch { .. } => DpatStatus::InvalidArgument,
    }
}

fn run(f: impl FnOnce() -> Result<(), DpatStatus> + std::panic::UnwindSafe) -> DpatStatus {
    match catch_unwind(f) {
        Ok(Ok(())) => DpatStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => DpatStatus::Panic,
    }
}

fn report(err: Error) -> DpatStatus {
    eprintln!("dpat: {err}");
    status_of(&err)
}

/// # Safety
/// `ptr` must be NULL or a NUL-terminated string valid for the call.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, DpatStatus> {
    if ptr.is_null() {
        return Err(DpatStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| DpatStatus::Utf8)
}

/// Model architecture and initialization knobs. `height`/`width` must be
/// divisible by 16 and match the data the model will consume.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DpatModelConfig {
    pub height: u32,
    pub width: u32,
    pub use_ima: bool,
    pub use_ifa: bool,
    pub ima_prototypes: bool,
    pub ifa_prototypes: bool,
    pub channel_softmax: bool,
    pub ima_channel_fc: bool,
    pub fuse_relu: bool,
    pub n_refs: u32,
    pub seed: u64,
}

impl DpatModelConfig {
    fn to_core(self) -> ModelConfig {
        let mut cfg = ModelConfig::new(self.height as usize, self.width as usize);
        cfg.use_ima = self.use_ima;
        cfg.use_ifa = self.use_ifa;
        cfg.ima_prototypes = self.ima_prototypes;
        cfg.ifa_prototypes = self.ifa_prototypes;
        cfg.channel_softmax = self.channel_softmax;
        cfg.ima_channel_fc = self.ima_channel_fc;
        cfg.fuse_relu = self.fuse_relu;
        cfg.n_refs = self.n_refs as usize;
        cfg.seed = self.seed;
        cfg
    }
}

/// Opaque trained-model handle.
pub struct DpatModel {
    inner: DpaModel,
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn dpat_status_message(status: DpatStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        DpatStatus::Ok => b"ok\0",
        DpatStatus::InvalidArgument => b"invalid argument\0",
        DpatStatus::Io => b"i/o error\0",
        DpatStatus::Validation => b"validation error\0",
        DpatStatus::Contract => b"contract violation\0",
        DpatStatus::NullPointer => b"null pointer\0",
        DpatStatus::Utf8 => b"invalid utf-8\0",
        DpatStatus::Panic => b"internal panic\0",
    };
    msg.as_ptr() as *const c_char
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dpat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Fills `out` with the default 64×64 configuration (all blocks enabled,
/// prototypes on, 4 reference frames).
///
/// # Safety
/// `out` must be valid for writes of one `DpatModelConfig`.
#[no_mangle]
pub unsafe extern "C" fn dpat_model_config_default(out: *mut DpatModelConfig) -> DpatStatus {
    if out.is_null() {
        return DpatStatus::NullPointer;
    }
    out.write(DpatModelConfig {
        height: 64,
        width: 64,
        use_ima: true,
        use_ifa: true,
        ima_prototypes: true,
        ifa_prototypes: true,
        channel_softmax: false,
        ima_channel_fc: false,
        fuse_relu: true,
        n_refs: 4,
        seed: 0,
    });
    DpatStatus::Ok
}

/// Creates a freshly initialized model.
///
/// # Safety
/// `cfg` and `out` must be valid; on success `*out` owns the handle.
#[no_mangle]
pub unsafe extern "C" fn dpat_model_create(
    cfg: *const DpatModelConfig,
    out: *mut *mut DpatModel,
) -> DpatStatus {
    if cfg.is_null() || out.is_null() {
        return DpatStatus::NullPointer;
    }
    let cfg = *cfg;
    run(AssertUnwindSafe(move || {
        let model = DpaModel::new(cfg.to_core()).map_err(report)?;
        unsafe { out.write(Box::into_raw(Box::new(DpatModel { inner: model }))) };
        Ok(())
    }))
}

/// Creates a model of the given configuration and loads checkpoint weights
/// into it. The configuration must match the one the checkpoint was trained
/// with; mismatches surface as `Validation`.
///
/// # Safety
/// `path`, `cfg` and `out` must be valid; on success `*out` owns the handle.
#[no_mangle]
pub unsafe extern "C" fn dpat_model_load(
    path: *const c_char,
    cfg: *const DpatModelConfig,
    out: *mut *mut DpatModel,
) -> DpatStatus {
    if cfg.is_null() || out.is_null() {
        return DpatStatus::NullPointer;
    }
    let cfg = *cfg;
    let path = match read_str(path) {
        Ok(s) => s.to_string(),
        Err(s) => return s,
    };
    run(AssertUnwindSafe(move || {
        let mut model = DpaModel::new(cfg.to_core()).map_err(report)?;
        model.load(&path).map_err(report)?;
        unsafe { out.write(Box::into_raw(Box::new(DpatModel { inner: model }))) };
        Ok(())
    }))
}

/// Saves the model's parameters as a checkpoint.
///
/// # Safety
/// `model` must be a live handle from this library; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn dpat_model_save(
    model: *const DpatModel,
    path: *const c_char,
) -> DpatStatus {
    if model.is_null() {
        return DpatStatus::NullPointer;
    }
    let path = match read_str(path) {
        Ok(s) => s.to_string(),
        Err(s) => return s,
    };
    let model = &*model;
    run(AssertUnwindSafe(move || model.inner.save(&path).map_err(report)))
}

/// Total trainable scalar count; 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpat_model_param_count(model: *const DpatModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    (*model).inner.param_count() as u64
}

/// Frees a model handle; NULL is a no-op.
///
/// # Safety
/// `model` must be NULL or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dpat_model_free(model: *mut DpatModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Uniformly spaced reference-frame indices (first frame only for n = 1).
/// `out` receives `n_refs` values.
///
/// # Safety
/// `out` must be valid for `n_refs` writes.
#[no_mangle]
pub unsafe extern "C" fn dpat_sample_frame_indices(
    video_len: u32,
    n_refs: u32,
    out: *mut u32,
) -> DpatStatus {
    if out.is_null() {
        return DpatStatus::NullPointer;
    }
    match dpat_core::ifa::sample_reference_indices(video_len as usize, n_refs as usize) {
        Ok(indices) => {
            for (i, idx) in indices.iter().enumerate() {
                out.add(i).write(*idx as u32);
            }
            DpatStatus::Ok
        }
        Err(e) => report(e),
    }
}

/// Renders a synthetic dataset to `root` (see the on-disk layout in the
/// project README). Deterministic in `seed`.
///
/// # Safety
/// `root` must be a valid string.
#[no_mangle]
pub unsafe extern "C" fn dpat_generate_dataset(
    root: *const c_char,
    seed: u64,
    n_videos: u32,
    len: u32,
    height: u32,
    width: u32,
    difficulty: f64,
) -> DpatStatus {
    let root = match read_str(root) {
        Ok(s) => s.to_string(),
        Err(s) => return s,
    };
    run(AssertUnwindSafe(move || {
        let videos = data::gen_synthetic(&data::GenConfig {
            seed,
            n_videos: n_videos as usize,
            len: len as usize,
            height: height as usize,
            width: width as usize,
            difficulty,
        })
        .map_err(report)?;
        data::save_dataset(&videos, &root).map_err(report)
    }))
}

/// Number of videos listed in a dataset manifest.
///
/// # Safety
/// `root` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dpat_dataset_video_count(
    root: *const c_char,
    out: *mut u32,
) -> DpatStatus {
    if out.is_null() {
        return DpatStatus::NullPointer;
    }
    let root = match read_str(root) {
        Ok(s) => s.to_string(),
        Err(s) => return s,
    };
    run(AssertUnwindSafe(move || {
        let index = data::dataset_index(&root).map_err(report)?;
        unsafe { out.write(index.len() as u32) };
        Ok(())
    }))
}

/// Manifest entry for one video: id (NUL-terminated, truncated to the
/// buffer) plus frame count and resolution.
///
/// # Safety
/// `id_buf` must be valid for `id_buf_len` bytes; the out pointers for one
/// write each.
#[no_mangle]
pub unsafe extern "C" fn dpat_dataset_video_info(
    root: *const c_char,
    index: u32,
    id_buf: *mut c_char,
    id_buf_len: u32,
    out_len: *mut u32,
    out_height: *mut u32,
    out_width: *mut u32,
) -> DpatStatus {
    if id_buf.is_null() || out_len.is_null() || out_height.is_null() || out_width.is_null() {
        return DpatStatus::NullPointer;
    }
    if id_buf_len == 0 {
        return DpatStatus::InvalidArgument;
    }
    let root = match read_str(root) {
        Ok(s) => s.to_string(),
        Err(s) => return s,
    };
    run(AssertUnwindSafe(move || {
        let entries = data::dataset_index(&root).map_err(report)?;
        let Some((id, l, h, w)) = entries.get(index as usize) else {
            eprintln!("dpat: video index {index} out of range ({} videos)", entries.len());
            return Err(DpatStatus::InvalidArgument);
        };
        let bytes = id.as_bytes();
        let n = bytes.len().min(id_buf_len as usize - 1);
        unsafe {
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), id_buf as *mut u8, n);
            id_buf.add(n).write(0);
            out_len.write(*l as u32);
            out_height.write(*h as u32);
            out_width.write(*w as u32);
        }
        Ok(())
    }))
}

/// Segments one dataset video. `masks_out` receives `len·height·width`
/// bytes of 0/1, frame-major; `masks_capacity` must be at least that.
///
/// # Safety
/// `model`, `root`, `video_id` must be valid; `masks_out` writable for
/// `masks_capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn dpat_infer_video(
    model: *const DpatModel,
    root: *const c_char,
    video_id: *const c_char,
    n_refs: u32,
    masks_out: *mut u8,
    masks_capacity: u64,
) -> DpatStatus {
    if model.is_null() || masks_out.is_null() {
        return DpatStatus::NullPointer;
    }
    let root = match read_str(root) {
        Ok(s) => s.to_string(),
        Err(s) => return s,
    };
    let id = match read_str(video_id) {
        Ok(s) => s.to_string(),
        Err(s) => return s,
    };
    let model = &*model;
    run(AssertUnwindSafe(move || {
        let video = data::load_video(&root, &id).map_err(report)?;
        let need = (video.len() * video.height() * video.width()) as u64;
        if masks_capacity < need {
            eprintln!("dpat: mask buffer holds {masks_capacity} bytes, need {need}");
            return Err(DpatStatus::InvalidArgument);
        }
        let masks = infer_video(&model.inner, &video, n_refs as usize).map_err(report)?;
        let mut offset = 0usize;
        for mask in &masks {
            unsafe {
                std::ptr::copy_nonoverlapping(
                    mask.data().as_ptr(),
                    masks_out.add(offset),
                    mask.data().len(),
                );
            }
            offset += mask.data().len();
        }
        Ok(())
    }))
}

/// Scores a predicted mask sequence against ground truth. Both buffers hold
/// `frames·height·width` bytes of 0/1, frame-major. Writes mean region
/// similarity J, boundary accuracy F, and their mean G.
///
/// # Safety
/// The mask buffers must be valid for the stated size, the out pointers for
/// one write each.
#[no_mangle]
pub unsafe extern "C" fn dpat_evaluate_masks(
    pred: *const u8,
    gt: *const u8,
    frames: u32,
    height: u32,
    width: u32,
    out_j: *mut f64,
    out_f: *mut f64,
    out_g: *mut f64,
) -> DpatStatus {
    if pred.is_null() || gt.is_null() || out_j.is_null() || out_f.is_null() || out_g.is_null() {
        return DpatStatus::NullPointer;
    }
    let (frames, h, w) = (frames as usize, height as usize, width as usize);
    let pred = std::slice::from_raw_parts(pred, frames * h * w);
    let gt = std::slice::from_raw_parts(gt, frames * h * w);
    run(AssertUnwindSafe(move || {
        let to_masks = |buf: &[u8]| -> Result<Vec<data::Mask>, DpatStatus> {
            buf.chunks(h * w)
                .map(|c| data::Mask::from_data(h, w, c.to_vec()).map_err(report))
                .collect()
        };
        let pred = to_masks(pred)?;
        let gt = to_masks(gt)?;
        let (j, f) = metrics::evaluate_sequence(&pred, &gt).map_err(report)?;
        unsafe {
            out_j.write(j);
            out_f.write(f);
            out_g.write(0.5 * (j + f));
        }
        Ok(())
    }))
}
