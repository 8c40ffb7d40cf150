//! Whole-video inference: banks are built once from the sampled reference
//! frames and read by every query frame.

use super::{Banks, DpaModel};
use crate::data::{Mask, VideoSample};
use crate::error::{Error, Result};
use crate::ifa::sample_reference_indices;
use crate::tensor::Tensor;

/// Argmax over the two logit planes; ties go to background.
pub fn logits_to_mask(logits: &Tensor) -> Mask {
    let (h, w) = (logits.shape()[1], logits.shape()[2]);
    let d = logits.data();
    let mut mask = Mask::empty(h, w);
    for p in 0..h * w {
        if d[h * w + p] > d[p] {
            mask.set(p / w, p % w, 1);
        }
    }
    mask
}

/// Banks for a full video at the given reference count.
pub fn build_video_banks(model: &DpaModel, video: &VideoSample, n_refs: usize) -> Result<Banks> {
    let indices = sample_reference_indices(video.len(), n_refs)?;
    let encodings: Vec<_> = indices
        .iter()
        .map(|&t| model.encode(&video.frames[t], &video.flows[t]))
        .collect::<Result<_>>()?;
    let refs: Vec<&_> = encodings.iter().collect();
    model.build_banks(&refs, indices)
}

/// Predicts a mask for every frame. The banks are read-only after
/// construction, so per-frame results do not depend on processing order.
pub fn infer_video(model: &DpaModel, video: &VideoSample, n_refs: usize) -> Result<Vec<Mask>> {
    if video.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "infer_video: video {} has no frames",
            video.id
        )));
    }
    let banks = build_video_banks(model, video, n_refs)?;
    video
        .frames
        .iter()
        .zip(&video.flows)
        .map(|(rgb, flow)| {
            let logits = model.forward_frame(rgb, flow, &banks)?;
            Ok(logits_to_mask(&logits))
        })
        .collect()
}
