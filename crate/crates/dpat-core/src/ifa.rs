//! Inter-frame attention: a per-video memory bank of reference-frame
//! prototypes, read adaptively by each query frame.
//!
//! Reference frames are sampled uniformly over the video, their prototypes
//! embedded into key/value features and concatenated into an immutable bank.
//! A query frame reads temporal context from the bank, correlates it back
//! against its own pixels to recover spatial layout, and fuses the result.

use rand::Rng;

use crate::error::{Error, Result};
use crate::prototype::{aggregate, self_correlate, soft_regions, PrototypeSet, RegionSoftmax};
use crate::tensor::{Parameter, Tensor};

/// Uniformly spaced reference-frame indices: `floor(i·(L−1)/(N−1))` for
/// i in 0..N. Endpoints are always 0 and L−1 for N ≥ 2; a single reference
/// anchors on the first frame.
pub fn sample_reference_indices(video_len: usize, n_refs: usize) -> Result<Vec<usize>> {
    if video_len == 0 || n_refs == 0 {
        return Err(Error::InvalidArgument(format!(
            "sample_reference_indices: L={video_len}, N={n_refs} must both be positive"
        )));
    }
    if n_refs > video_len {
        return Err(Error::InvalidArgument(format!(
            "sample_reference_indices: N={n_refs} exceeds video length L={video_len}"
        )));
    }
    if n_refs == 1 {
        return Ok(vec![0]);
    }
    Ok((0..n_refs)
        .map(|i| (i as u64 * (video_len as u64 - 1) / (n_refs as u64 - 1)) as usize)
        .collect())
}

/// Immutable key/value store built once per video from the sampled reference
/// frames. Columns are grouped per frame: N frames × D' prototypes each.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    keys: Tensor,
    values: Tensor,
    frame_indices: Vec<usize>,
}

impl MemoryBank {
    pub fn keys(&self) -> &Tensor {
        &self.keys
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn frame_indices(&self) -> &[usize] {
        &self.frame_indices
    }

    pub fn n_refs(&self) -> usize {
        self.frame_indices.len()
    }

    /// Total column count N·D'.
    pub fn columns(&self) -> usize {
        self.keys.shape()[1]
    }
}

#[derive(Debug, Clone)]
pub struct IfaConfig {
    /// Channel count D of the query and reference maps.
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// When false, raw pixel features stand in for prototypes (D' = HW).
    pub use_prototypes: bool,
    pub region_softmax: RegionSoftmax,
    /// Apply relu after the fusion convolution.
    pub fuse_relu: bool,
    /// Default reference-frame count for inference-time bank construction.
    pub n_refs: usize,
}

impl IfaConfig {
    pub fn hw(&self) -> usize {
        self.height * self.width
    }

    /// Prototype count D' per frame.
    pub fn proto_count(&self) -> usize {
        if self.use_prototypes {
            self.channels
        } else {
            self.hw()
        }
    }
}

/// Temporal attention block. Key/value embeddings share weights across
/// reference frames; the query embedding is separate. All three act on the
/// channel axis (D→D), applied to each frame separately.
#[derive(Debug, Clone)]
pub struct IfaBlock {
    cfg: IfaConfig,
    q_embed: Parameter,
    k_embed: Parameter,
    v_embed: Parameter,
    fuse_w: Parameter,
    fuse_b: Parameter,
}

impl IfaBlock {
    pub fn new(cfg: IfaConfig, prefix: &str, rng: &mut impl Rng) -> IfaBlock {
        let d = cfg.channels;
        let fuse_in = d + cfg.proto_count(); // Y (D) ⊕ Ψ2 (D')
        IfaBlock {
            cfg,
            q_embed: Parameter::uniform_init(format!("{prefix}.q"), &[d, d], d, rng),
            k_embed: Parameter::uniform_init(format!("{prefix}.k"), &[d, d], d, rng),
            v_embed: Parameter::uniform_init(format!("{prefix}.v"), &[d, d], d, rng),
            fuse_w: Parameter::uniform_init(
                format!("{prefix}.fuse.w"),
                &[d, fuse_in, 3, 3],
                fuse_in * 9,
                rng,
            ),
            fuse_b: Parameter::zeros(format!("{prefix}.fuse.b"), &[d]),
        }
    }

    pub fn config(&self) -> &IfaConfig {
        &self.cfg
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.q_embed, &self.k_embed, &self.v_embed, &self.fuse_w, &self.fuse_b]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.q_embed,
            &mut self.k_embed,
            &mut self.v_embed,
            &mut self.fuse_w,
            &mut self.fuse_b,
        ]
    }

    /// Prototypes of one frame; the prototype-bypass mode passes the raw
    /// pixel features through unchanged.
    fn prototypes(&self, y: &Tensor) -> Result<PrototypeSet> {
        if self.cfg.use_prototypes {
            let s = soft_regions(y, self.cfg.region_softmax)?;
            aggregate(y, &s)
        } else {
            PrototypeSet::from_tensor(y.clone())
        }
    }

    /// Builds the bank from reference-frame feature maps (each D×HW).
    /// Embedding runs per frame; the per-frame K/V matrices are concatenated
    /// along the prototype axis into D×N·D'.
    pub fn build_memory(
        &self,
        ref_features: &[Tensor],
        frame_indices: Vec<usize>,
    ) -> Result<MemoryBank> {
        if ref_features.is_empty() {
            return Err(Error::Contract("build_memory: empty reference set".into()));
        }
        if ref_features.len() != frame_indices.len() {
            return Err(Error::InvalidArgument(format!(
                "build_memory: {} feature maps vs {} frame indices",
                ref_features.len(),
                frame_indices.len()
            )));
        }
        let expect = [self.cfg.channels, self.cfg.hw()];
        let mut keys: Option<Tensor> = None;
        let mut values: Option<Tensor> = None;
        for feat in ref_features {
            if feat.shape() != expect {
                return Err(Error::shape("build_memory", feat.shape(), &expect));
            }
            let protos = self.prototypes(feat)?;
            let k = self.k_embed.tensor().matmul(protos.tensor())?;
            let v = self.v_embed.tensor().matmul(protos.tensor())?;
            keys = Some(match keys {
                Some(acc) => acc.concat(&k, 1)?,
                None => k,
            });
            values = Some(match values {
                Some(acc) => acc.concat(&v, 1)?,
                None => v,
            });
        }
        Ok(MemoryBank {
            keys: keys.unwrap(),
            values: values.unwrap(),
            frame_indices,
        })
    }

    /// Reads temporal context: `Φ2 = Qᵀ ⊗ K`, softmax over the bank axis,
    /// `R = (Softmax(Φ2) ⊗ Vᵀ)ᵀ`. Every column of R is a convex combination
    /// of bank value columns.
    pub fn temporal_read(&self, query_protos: &PrototypeSet, bank: &MemoryBank) -> Result<Tensor> {
        if bank.columns() == 0 {
            return Err(Error::Contract("temporal_read: empty memory bank".into()));
        }
        if query_protos.feature_size() != self.cfg.channels {
            return Err(Error::shape(
                "temporal_read",
                query_protos.tensor().shape(),
                &[self.cfg.channels],
            ));
        }
        let q = self.q_embed.tensor().matmul(query_protos.tensor())?;
        let phi = q.transpose()?.matmul(bank.keys())?;
        let attn = phi.softmax(1)?;
        let read = attn.matmul(&bank.values().transpose()?)?;
        read.transpose()
    }

    /// Full query-frame pass: prototypes → temporal read → correlation of the
    /// read context against the query pixels → fusion. Output is D×HW.
    pub fn forward(&self, y: &Tensor, bank: &MemoryBank) -> Result<Tensor> {
        let expect = [self.cfg.channels, self.cfg.hw()];
        if y.shape() != expect {
            return Err(Error::shape("ifa_forward", y.shape(), &expect));
        }
        let protos = self.prototypes(y)?;
        let read = self.temporal_read(&protos, bank)?;
        let psi = self_correlate(&PrototypeSet::from_tensor(read)?, y)?;
        let stacked = y.concat(psi.tensor(), 0)?;
        let c_in = stacked.shape()[0];
        let map = stacked.reshape(&[c_in, self.cfg.height, self.cfg.width])?;
        let conv = map
            .conv2d(self.fuse_w.tensor(), 1)?
            .add_channel_bias(self.fuse_b.tensor())?;
        let conv = if self.cfg.fuse_relu { conv.relu() } else { conv };
        conv.reshape(&[self.cfg.channels, self.cfg.hw()])
    }
}
