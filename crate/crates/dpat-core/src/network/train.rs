//! Snippet training loop: sample a 4-frame clip, build banks from the clip
//! itself, average the per-frame cross-entropy, and take one Adam step on a
//! cosine-annealed rate. Gradients flow through the banks.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::DpaModel;
use crate::data::{sample_snippet, VideoSample, SNIPPET_LEN};
use crate::error::{Error, Result};
use crate::tensor::{cosine_lr, Adam, Tensor};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Snippet length; the training protocol fixes this at 4.
    pub snippet_len: usize,
    /// Snippets averaged per optimizer step.
    pub batch_size: usize,
    pub total_steps: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub seed: u64,
    /// Reference count handed to inference after training.
    pub n_refs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            snippet_len: SNIPPET_LEN,
            batch_size: 1,
            total_steps: 200,
            lr_max: 1e-4,
            lr_min: 1e-5,
            seed: 0,
            n_refs: 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

pub fn records_to_csv(records: &[StepRecord]) -> String {
    let mut out = String::from("step,lr,loss\n");
    for r in records {
        out.push_str(&format!("{},{:.12e},{:.12e}\n", r.step, r.lr, r.loss));
    }
    out
}

/// Trains in place and returns the per-step loss curve.
pub fn train(
    model: &mut DpaModel,
    videos: &[VideoSample],
    cfg: &TrainConfig,
) -> Result<Vec<StepRecord>> {
    if cfg.snippet_len != SNIPPET_LEN {
        return Err(Error::Contract(format!(
            "snippet length is fixed at {SNIPPET_LEN}, got {}",
            cfg.snippet_len
        )));
    }
    if videos.is_empty() {
        return Err(Error::InvalidArgument("train: empty dataset".into()));
    }
    if cfg.batch_size == 0 || cfg.total_steps == 0 {
        return Err(Error::InvalidArgument(
            "train: batch_size and total_steps must be positive".into(),
        ));
    }
    for v in videos {
        if v.len() < SNIPPET_LEN {
            return Err(Error::InvalidArgument(format!(
                "train: video {} is shorter than a snippet",
                v.id
            )));
        }
        if v.height() != model.config().height || v.width() != model.config().width {
            return Err(Error::InvalidArgument(format!(
                "train: video {} is {}x{}, model expects {}x{}",
                v.id,
                v.height(),
                v.width(),
                model.config().height,
                model.config().width
            )));
        }
    }

    // Snippet sampling uses its own stream so weight init and data order are
    // independent knobs.
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut opt = Adam::new();
    let mut curve = Vec::with_capacity(cfg.total_steps);

    for step in 0..cfg.total_steps {
        let lr = cosine_lr(step, cfg.total_steps, cfg.lr_max, cfg.lr_min);
        model.zero_grad();

        let mut batch_loss: Option<Tensor> = None;
        for _ in 0..cfg.batch_size {
            let snippet = sample_snippet(videos, &mut rng)?;
            let encodings: Vec<_> = snippet
                .frames()
                .iter()
                .zip(snippet.flows())
                .map(|(rgb, flow)| model.encode(rgb, flow))
                .collect::<Result<_>>()?;
            let enc_refs: Vec<&_> = encodings.iter().collect();
            let banks = model.build_banks(&enc_refs, (0..SNIPPET_LEN).collect())?;

            let mut snippet_loss: Option<Tensor> = None;
            for (enc, mask) in encodings.iter().zip(snippet.masks()) {
                let logits = model.head_forward(enc, &banks)?;
                let frame_loss = logits.cross_entropy_binary(mask.data())?;
                snippet_loss = Some(match snippet_loss {
                    Some(acc) => acc.add(&frame_loss)?,
                    None => frame_loss,
                });
            }
            let snippet_loss = snippet_loss.unwrap().scale(1.0 / SNIPPET_LEN as f64);
            batch_loss = Some(match batch_loss {
                Some(acc) => acc.add(&snippet_loss)?,
                None => snippet_loss,
            });
        }
        let loss = batch_loss.unwrap().scale(1.0 / cfg.batch_size as f64);
        loss.backward()?;
        let mut params = model.parameters_mut();
        opt.step(&mut params, lr);

        curve.push(StepRecord {
            step,
            lr,
            loss: loss.item(),
        });
    }
    Ok(curve)
}
