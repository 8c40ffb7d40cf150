//! Two-stream encoder–decoder with prototype attention at the deep blocks.
//!
//! Five conv blocks per stream (widths 16→128, 2× average-pool between
//! blocks), inter-modality attention after blocks 4 and 5, inter-frame
//! attention at block 5 per stream. The block-5 attention outputs are fused
//! per stream by a 1×1 conv, summed across streams, widened by multi-dilation
//! pooling, and decoded back to full resolution with appearance-stream skips.

mod ablate;
mod bench;
mod infer;
mod train;

pub use ablate::{
    grid_rows, rows_to_csv, rows_to_text, run_ablation, standard_grid, AblationCell,
    AblationOptions, AblationRow, SeedResult,
};
pub use bench::{bench_model, BenchReport};
pub use infer::{build_video_banks, infer_video, logits_to_mask};
pub use train::{records_to_csv, train, StepRecord, TrainConfig};

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::ifa::{IfaBlock, IfaConfig, MemoryBank};
use crate::ima::{ImaBlock, ImaConfig};
use crate::prototype::RegionSoftmax;
use crate::tensor::{load_checkpoint, save_checkpoint, Parameter, Tensor};

/// Encoder block widths; block 5 defines the attention feature size.
pub const ENCODER_WIDTHS: [usize; 5] = [16, 32, 64, 96, 128];
const ASPP_BRANCH: usize = 64;

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub use_ima: bool,
    pub use_ifa: bool,
    pub ima_prototypes: bool,
    pub ifa_prototypes: bool,
    /// Region softmax over the channel axis instead of the spatial axis.
    pub channel_softmax: bool,
    /// σ embeddings in the attention blocks act per pixel instead of per row.
    pub ima_channel_fc: bool,
    /// Relu after the attention fusion convolutions.
    pub fuse_relu: bool,
    /// Default reference-frame count at inference.
    pub n_refs: usize,
    /// Weight-initialization seed.
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(height: usize, width: usize) -> ModelConfig {
        ModelConfig {
            height,
            width,
            use_ima: true,
            use_ifa: true,
            ima_prototypes: true,
            ifa_prototypes: true,
            channel_softmax: false,
            ima_channel_fc: false,
            fuse_relu: true,
            n_refs: 4,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height % 16 != 0 || self.width % 16 != 0 {
            return Err(Error::InvalidArgument(format!(
                "model resolution {}x{} must be positive and divisible by 16",
                self.height, self.width
            )));
        }
        if self.n_refs == 0 {
            return Err(Error::InvalidArgument("n_refs must be at least 1".into()));
        }
        Ok(())
    }

    fn region_softmax(&self) -> RegionSoftmax {
        if self.channel_softmax {
            RegionSoftmax::Channel
        } else {
            RegionSoftmax::Spatial
        }
    }
}

/// 2-D conv + bias. Relu is applied by callers where the architecture asks
/// for it.
#[derive(Debug, Clone)]
struct ConvLayer {
    w: Parameter,
    b: Parameter,
    dilation: usize,
}

impl ConvLayer {
    fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> ConvLayer {
        ConvLayer {
            w: Parameter::uniform_init(format!("{name}.w"), &[c_out, c_in, k, k], c_in * k * k, rng),
            b: Parameter::zeros(format!("{name}.b"), &[c_out]),
            dilation,
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv2d(self.w.tensor(), self.dilation)?
            .add_channel_bias(self.b.tensor())
    }

    fn params(&self) -> Vec<&Parameter> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Two 3×3 convs, relu after each.
#[derive(Debug, Clone)]
struct EncoderBlock {
    conv1: ConvLayer,
    conv2: ConvLayer,
}

impl EncoderBlock {
    fn new(name: &str, c_in: usize, c_out: usize, rng: &mut impl Rng) -> EncoderBlock {
        EncoderBlock {
            conv1: ConvLayer::new(&format!("{name}.c1"), c_in, c_out, 3, 1, rng),
            conv2: ConvLayer::new(&format!("{name}.c2"), c_out, c_out, 3, 1, rng),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.conv2.forward(&self.conv1.forward(x)?.relu())?.relu())
    }
}

#[derive(Debug, Clone)]
struct Encoder {
    blocks: Vec<EncoderBlock>,
}

impl Encoder {
    fn new(name: &str, rng: &mut impl Rng) -> Encoder {
        let mut blocks = Vec::with_capacity(5);
        let mut c_in = 3;
        for (i, &c_out) in ENCODER_WIDTHS.iter().enumerate() {
            blocks.push(EncoderBlock::new(&format!("{name}.b{}", i + 1), c_in, c_out, rng));
            c_in = c_out;
        }
        Encoder { blocks }
    }

    fn params(&self) -> Vec<&Parameter> {
        self.blocks
            .iter()
            .flat_map(|b| {
                b.conv1
                    .params()
                    .into_iter()
                    .chain(b.conv2.params())
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.blocks
            .iter_mut()
            .flat_map(|b| {
                b.conv1
                    .params_mut()
                    .into_iter()
                    .chain(b.conv2.params_mut())
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Multi-dilation context block: parallel 3×3 convs at dilations 1, 2, 4 and
/// a global-average branch, concatenated and projected back.
#[derive(Debug, Clone)]
struct Aspp {
    d1: ConvLayer,
    d2: ConvLayer,
    d4: ConvLayer,
    gap: ConvLayer,
    proj: ConvLayer,
}

impl Aspp {
    fn new(name: &str, channels: usize, rng: &mut impl Rng) -> Aspp {
        Aspp {
            d1: ConvLayer::new(&format!("{name}.d1"), channels, ASPP_BRANCH, 3, 1, rng),
            d2: ConvLayer::new(&format!("{name}.d2"), channels, ASPP_BRANCH, 3, 2, rng),
            d4: ConvLayer::new(&format!("{name}.d4"), channels, ASPP_BRANCH, 3, 4, rng),
            gap: ConvLayer::new(&format!("{name}.gap"), channels, ASPP_BRANCH, 1, 1, rng),
            proj: ConvLayer::new(&format!("{name}.proj"), 4 * ASPP_BRANCH, channels, 1, 1, rng),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let b1 = self.d1.forward(x)?.relu();
        let b2 = self.d2.forward(x)?.relu();
        let b3 = self.d4.forward(x)?.relu();
        let g = self
            .gap
            .forward(&x.global_avg_pool()?)?
            .relu()
            .broadcast_spatial(h, w)?;
        let stacked = b1.concat(&b2, 0)?.concat(&b3, 0)?.concat(&g, 0)?;
        Ok(self.proj.forward(&stacked)?.relu())
    }

    fn params(&self) -> Vec<&Parameter> {
        [&self.d1, &self.d2, &self.d4, &self.gap, &self.proj]
            .into_iter()
            .flat_map(|c| c.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        [
            &mut self.d1,
            &mut self.d2,
            &mut self.d4,
            &mut self.gap,
            &mut self.proj,
        ]
        .into_iter()
        .flat_map(|c| c.params_mut())
        .collect()
    }
}

/// Four upsample-concat-conv stages fed by appearance-stream skips, then a
/// 1×1 head to two logits.
#[derive(Debug, Clone)]
struct Decoder {
    up4: ConvLayer,
    up3: ConvLayer,
    up2: ConvLayer,
    up1: ConvLayer,
    head: ConvLayer,
}

impl Decoder {
    fn new(name: &str, rng: &mut impl Rng) -> Decoder {
        let [w1, w2, w3, w4, w5] = ENCODER_WIDTHS;
        Decoder {
            up4: ConvLayer::new(&format!("{name}.up4"), w5 + w4, w4, 3, 1, rng),
            up3: ConvLayer::new(&format!("{name}.up3"), w4 + w3, w3, 3, 1, rng),
            up2: ConvLayer::new(&format!("{name}.up2"), w3 + w2, w2, 3, 1, rng),
            up1: ConvLayer::new(&format!("{name}.up1"), w2 + w1, w1, 3, 1, rng),
            head: ConvLayer::new(&format!("{name}.head"), w1, 2, 1, 1, rng),
        }
    }

    fn forward(&self, x: &Tensor, skips: [&Tensor; 4]) -> Result<Tensor> {
        let [a4, a3, a2, a1] = skips;
        let d = self.up4.forward(&x.upsample2_nearest()?.concat(a4, 0)?)?.relu();
        let d = self.up3.forward(&d.upsample2_nearest()?.concat(a3, 0)?)?.relu();
        let d = self.up2.forward(&d.upsample2_nearest()?.concat(a2, 0)?)?.relu();
        let d = self.up1.forward(&d.upsample2_nearest()?.concat(a1, 0)?)?.relu();
        self.head.forward(&d)
    }

    fn params(&self) -> Vec<&Parameter> {
        [&self.up4, &self.up3, &self.up2, &self.up1, &self.head]
            .into_iter()
            .flat_map(|c| c.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        [
            &mut self.up4,
            &mut self.up3,
            &mut self.up2,
            &mut self.up1,
            &mut self.head,
        ]
        .into_iter()
        .flat_map(|c| c.params_mut())
        .collect()
    }
}

/// Everything one frame contributes to bank building and prediction.
#[derive(Debug, Clone)]
pub struct FrameEncoding {
    a1: Tensor,
    a2: Tensor,
    a3: Tensor,
    a4r: Tensor,
    a5: Tensor,
    m5: Tensor,
}

impl FrameEncoding {
    /// Block-5 appearance features (C×H/16×W/16).
    pub fn appearance5(&self) -> &Tensor {
        &self.a5
    }

    /// Block-5 motion features.
    pub fn motion5(&self) -> &Tensor {
        &self.m5
    }
}

/// Per-stream memory banks; empty when temporal attention is disabled.
#[derive(Debug, Clone)]
pub struct Banks {
    pub appearance: Option<MemoryBank>,
    pub motion: Option<MemoryBank>,
}

impl Banks {
    pub fn empty() -> Banks {
        Banks {
            appearance: None,
            motion: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DpaModel {
    cfg: ModelConfig,
    enc_a: Encoder,
    enc_m: Encoder,
    ima4: Option<ImaBlock>,
    ima5: Option<ImaBlock>,
    ifa_a: Option<IfaBlock>,
    ifa_m: Option<IfaBlock>,
    fuse5_a: ConvLayer,
    fuse5_m: ConvLayer,
    aspp: Aspp,
    decoder: Decoder,
}

impl DpaModel {
    pub fn new(cfg: ModelConfig) -> Result<DpaModel> {
        cfg.validate()?;
        let mut rng = <ChaCha12Rng as rand::SeedableRng>::seed_from_u64(cfg.seed);
        let enc_a = Encoder::new("enc_a", &mut rng);
        let enc_m = Encoder::new("enc_m", &mut rng);

        let (h4, w4) = (cfg.height / 8, cfg.width / 8);
        let (h5, w5) = (cfg.height / 16, cfg.width / 16);
        let c4 = ENCODER_WIDTHS[3];
        let c5 = ENCODER_WIDTHS[4];

        let ima = |h: usize, w: usize, c: usize| ImaConfig {
            channels: c,
            height: h,
            width: w,
            use_prototypes: cfg.ima_prototypes,
            region_softmax: cfg.region_softmax(),
            channel_fc: cfg.ima_channel_fc,
            fuse_relu: cfg.fuse_relu,
        };
        let (ima4, ima5) = if cfg.use_ima {
            (
                Some(ImaBlock::new(ima(h4, w4, c4), "ima4", &mut rng)),
                Some(ImaBlock::new(ima(h5, w5, c5), "ima5", &mut rng)),
            )
        } else {
            (None, None)
        };

        let ifa = IfaConfig {
            channels: c5,
            height: h5,
            width: w5,
            use_prototypes: cfg.ifa_prototypes,
            region_softmax: cfg.region_softmax(),
            fuse_relu: cfg.fuse_relu,
            n_refs: cfg.n_refs,
        };
        let (ifa_a, ifa_m) = if cfg.use_ifa {
            (
                Some(IfaBlock::new(ifa.clone(), "ifa_a", &mut rng)),
                Some(IfaBlock::new(ifa, "ifa_m", &mut rng)),
            )
        } else {
            (None, None)
        };

        let fuse5_a = ConvLayer::new("fuse5_a", 2 * c5, c5, 1, 1, &mut rng);
        let fuse5_m = ConvLayer::new("fuse5_m", 2 * c5, c5, 1, 1, &mut rng);
        let aspp = Aspp::new("aspp", c5, &mut rng);
        let decoder = Decoder::new("dec", &mut rng);

        Ok(DpaModel {
            cfg,
            enc_a,
            enc_m,
            ima4,
            ima5,
            ifa_a,
            ifa_m,
            fuse5_a,
            fuse5_m,
            aspp,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = self.enc_a.params();
        out.extend(self.enc_m.params());
        if let Some(b) = &self.ima4 {
            out.extend(b.parameters());
        }
        if let Some(b) = &self.ima5 {
            out.extend(b.parameters());
        }
        if let Some(b) = &self.ifa_a {
            out.extend(b.parameters());
        }
        if let Some(b) = &self.ifa_m {
            out.extend(b.parameters());
        }
        out.extend(self.fuse5_a.params());
        out.extend(self.fuse5_m.params());
        out.extend(self.aspp.params());
        out.extend(self.decoder.params());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.enc_a.params_mut();
        out.extend(self.enc_m.params_mut());
        if let Some(b) = &mut self.ima4 {
            out.extend(b.parameters_mut());
        }
        if let Some(b) = &mut self.ima5 {
            out.extend(b.parameters_mut());
        }
        if let Some(b) = &mut self.ifa_a {
            out.extend(b.parameters_mut());
        }
        if let Some(b) = &mut self.ifa_m {
            out.extend(b.parameters_mut());
        }
        out.extend(self.fuse5_a.params_mut());
        out.extend(self.fuse5_m.params_mut());
        out.extend(self.aspp.params_mut());
        out.extend(self.decoder.params_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }

    pub fn zero_grad(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    fn check_input(&self, t: &Tensor, what: &str) -> Result<()> {
        let want = [3, self.cfg.height, self.cfg.width];
        if t.shape() != want {
            return Err(Error::InvalidArgument(format!(
                "{what} has shape {:?}, model expects {:?}",
                t.shape(),
                want
            )));
        }
        Ok(())
    }

    /// Runs both encoders over one frame, applying the block-4 cross
    /// attention, and keeps the maps the later stages need.
    pub fn encode(&self, rgb: &Tensor, flow: &Tensor) -> Result<FrameEncoding> {
        self.check_input(rgb, "rgb frame")?;
        self.check_input(flow, "flow map")?;

        let a1 = self.enc_a.blocks[0].forward(rgb)?;
        let m1 = self.enc_m.blocks[0].forward(flow)?;
        let a2 = self.enc_a.blocks[1].forward(&a1.avgpool2()?)?;
        let m2 = self.enc_m.blocks[1].forward(&m1.avgpool2()?)?;
        let a3 = self.enc_a.blocks[2].forward(&a2.avgpool2()?)?;
        let m3 = self.enc_m.blocks[2].forward(&m2.avgpool2()?)?;
        let a4 = self.enc_a.blocks[3].forward(&a3.avgpool2()?)?;
        let m4 = self.enc_m.blocks[3].forward(&m3.avgpool2()?)?;

        let (a4r, m4r) = match &self.ima4 {
            Some(block) => {
                let (c, h, w) = (a4.shape()[0], a4.shape()[1], a4.shape()[2]);
                let (ra, rm) = block.forward(&a4.reshape(&[c, h * w])?, &m4.reshape(&[c, h * w])?)?;
                (ra.reshape(&[c, h, w])?, rm.reshape(&[c, h, w])?)
            }
            None => (a4, m4),
        };

        let a5 = self.enc_a.blocks[4].forward(&a4r.avgpool2()?)?;
        let m5 = self.enc_m.blocks[4].forward(&m4r.avgpool2()?)?;

        Ok(FrameEncoding {
            a1,
            a2,
            a3,
            a4r,
            a5,
            m5,
        })
    }

    /// Builds the per-stream banks from reference-frame encodings. With
    /// temporal attention disabled the banks are empty placeholders.
    pub fn build_banks(&self, refs: &[&FrameEncoding], frame_indices: Vec<usize>) -> Result<Banks> {
        let (Some(ifa_a), Some(ifa_m)) = (&self.ifa_a, &self.ifa_m) else {
            return Ok(Banks::empty());
        };
        let (h5, w5) = (self.cfg.height / 16, self.cfg.width / 16);
        let c5 = ENCODER_WIDTHS[4];
        let feats_a: Vec<Tensor> = refs
            .iter()
            .map(|e| e.a5.reshape(&[c5, h5 * w5]))
            .collect::<Result<_>>()?;
        let feats_m: Vec<Tensor> = refs
            .iter()
            .map(|e| e.m5.reshape(&[c5, h5 * w5]))
            .collect::<Result<_>>()?;
        Ok(Banks {
            appearance: Some(ifa_a.build_memory(&feats_a, frame_indices.clone())?),
            motion: Some(ifa_m.build_memory(&feats_m, frame_indices)?),
        })
    }

    /// Prediction head over a prepared encoding: block-5 attention, stream
    /// fusion, context pooling, decoding. Returns 2×H×W logits.
    pub fn head_forward(&self, enc: &FrameEncoding, banks: &Banks) -> Result<Tensor> {
        let (h5, w5) = (self.cfg.height / 16, self.cfg.width / 16);
        let c5 = ENCODER_WIDTHS[4];
        let a5f = enc.a5.reshape(&[c5, h5 * w5])?;
        let m5f = enc.m5.reshape(&[c5, h5 * w5])?;

        let (ia, im) = match &self.ima5 {
            Some(block) => block.forward(&a5f, &m5f)?,
            None => (a5f.clone(), m5f.clone()),
        };
        let fa = match &self.ifa_a {
            Some(block) => {
                let bank = banks.appearance.as_ref().ok_or_else(|| {
                    Error::Contract("temporal attention enabled but appearance bank missing".into())
                })?;
                block.forward(&a5f, bank)?
            }
            None => a5f.clone(),
        };
        let fm = match &self.ifa_m {
            Some(block) => {
                let bank = banks.motion.as_ref().ok_or_else(|| {
                    Error::Contract("temporal attention enabled but motion bank missing".into())
                })?;
                block.forward(&m5f, bank)?
            }
            None => m5f.clone(),
        };

        let to_map = |t: &Tensor| t.reshape(&[c5, h5, w5]);
        let fused_a = self
            .fuse5_a
            .forward(&to_map(&ia)?.concat(&to_map(&fa)?, 0)?)?
            .relu();
        let fused_m = self
            .fuse5_m
            .forward(&to_map(&im)?.concat(&to_map(&fm)?, 0)?)?
            .relu();

        let x = self.aspp.forward(&fused_a.add(&fused_m)?)?;
        self.decoder
            .forward(&x, [&enc.a4r, &enc.a3, &enc.a2, &enc.a1])
    }

    /// Full per-frame pass: encode, then predict against the given banks.
    pub fn forward_frame(&self, rgb: &Tensor, flow: &Tensor, banks: &Banks) -> Result<Tensor> {
        let enc = self.encode(rgb, flow)?;
        self.head_forward(&enc, banks)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        save_checkpoint(path, &self.parameters())
    }

    /// Loads a checkpoint written by a model of the same configuration.
    /// Every parameter must be present with a matching shape; unknown
    /// records are rejected.
    pub fn load(&mut self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let records = load_checkpoint(&path)?;
        let mut by_name: std::collections::BTreeMap<String, crate::tensor::TensorRecord> =
            records.into_iter().map(|r| (r.name.clone(), r)).collect();
        for p in self.parameters_mut() {
            let rec = by_name.remove(p.name()).ok_or_else(|| {
                Error::Validation(format!("checkpoint is missing parameter {}", p.name()))
            })?;
            if rec.shape != p.shape() {
                return Err(Error::Validation(format!(
                    "parameter {} has shape {:?} in checkpoint, model expects {:?}",
                    p.name(),
                    rec.shape,
                    p.shape()
                )));
            }
            p.set_data(rec.data)?;
        }
        if let Some(name) = by_name.keys().next() {
            return Err(Error::Validation(format!(
                "checkpoint contains unknown parameter {name}"
            )));
        }
        Ok(())
    }
}
