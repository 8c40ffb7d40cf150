//! Parameter counting and per-frame timing.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{infer::build_video_banks, DpaModel};
use crate::data::{Mask, VideoSample};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub param_count: usize,
    pub repeats: usize,
    /// Per-frame forward with a prebuilt bank.
    pub forward_mean_s: f64,
    pub forward_std_s: f64,
    /// Bank construction plus one frame forward.
    pub with_bank_mean_s: f64,
    pub with_bank_std_s: f64,
}

impl BenchReport {
    pub fn forward_cv(&self) -> f64 {
        self.forward_std_s / self.forward_mean_s
    }

    pub fn to_csv(&self) -> String {
        format!(
            "params,repeats,forward_mean_s,forward_std_s,with_bank_mean_s,with_bank_std_s\n{},{},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            self.param_count,
            self.repeats,
            self.forward_mean_s,
            self.forward_std_s,
            self.with_bank_mean_s,
            self.with_bank_std_s
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "parameters       {}\nrepeats          {}\nforward          {:.4} ms ± {:.4} ms (bank prebuilt)\nbank + forward   {:.4} ms ± {:.4} ms\n",
            self.param_count,
            self.repeats,
            1e3 * self.forward_mean_s,
            1e3 * self.forward_std_s,
            1e3 * self.with_bank_mean_s,
            1e3 * self.with_bank_std_s
        )
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Times forward passes on a synthetic random video at the model resolution.
pub fn bench_model(model: &DpaModel, n_refs: usize, repeats: usize) -> Result<BenchReport> {
    let (h, w) = (model.config().height, model.config().width);
    let mut rng = ChaCha12Rng::seed_from_u64(0xBE7C);
    let len = n_refs.max(2);
    let video = VideoSample {
        id: "bench".into(),
        frames: (0..len)
            .map(|_| Tensor::uniform(&[3, h, w], 0.0, 1.0, &mut rng))
            .collect(),
        flows: (0..len)
            .map(|_| Tensor::uniform(&[3, h, w], 0.0, 1.0, &mut rng))
            .collect(),
        masks: (0..len).map(|_| Mask::empty(h, w)).collect(),
    };

    let banks = build_video_banks(model, &video, n_refs)?;
    // warmup
    for _ in 0..2 {
        model.forward_frame(&video.frames[0], &video.flows[0], &banks)?;
    }

    let mut forward = Vec::with_capacity(repeats);
    for i in 0..repeats {
        let f = i % len;
        let t0 = Instant::now();
        model.forward_frame(&video.frames[f], &video.flows[f], &banks)?;
        forward.push(t0.elapsed().as_secs_f64());
    }

    let bank_repeats = repeats.min(10).max(1);
    let mut with_bank = Vec::with_capacity(bank_repeats);
    for _ in 0..bank_repeats {
        let t0 = Instant::now();
        let banks = build_video_banks(model, &video, n_refs)?;
        model.forward_frame(&video.frames[0], &video.flows[0], &banks)?;
        with_bank.push(t0.elapsed().as_secs_f64());
    }

    let (fm, fs) = mean_std(&forward);
    let (bm, bs) = mean_std(&with_bank);
    Ok(BenchReport {
        param_count: model.param_count(),
        repeats,
        forward_mean_s: fm,
        forward_std_s: fs,
        with_bank_mean_s: bm,
        with_bank_std_s: bs,
    })
}
