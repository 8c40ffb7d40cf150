//! Inter-modality attention: mutual refinement of the appearance and motion
//! feature maps through prototype correspondences.
//!
//! Per branch, the input map is summarized into prototypes and correlated
//! back against its own pixels; key/value features embedded from these
//! correlation maps drive a bidirectional cross attention, and each branch is
//! refined by fusing the features transferred from the other one.

use rand::Rng;

use crate::error::{Error, Result};
use crate::prototype::{aggregate, self_correlate, soft_regions, RegionSoftmax};
use crate::tensor::{Parameter, Tensor};

/// Which embedding to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Key,
    Value,
}

/// Which modality branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Appearance,
    Motion,
}

#[derive(Debug, Clone)]
pub struct ImaConfig {
    /// Channel count C of both input maps (C' == C).
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// When false, key/value features embed directly from the input maps.
    pub use_prototypes: bool,
    /// Region softmax axis for prototype generation.
    pub region_softmax: RegionSoftmax,
    /// When true the σ embeddings act on the channel axis (C'×C' weight)
    /// instead of the spatial axis (HW×HW weight).
    pub channel_fc: bool,
    /// Apply relu after the fusion convolutions.
    pub fuse_relu: bool,
}

impl ImaConfig {
    pub fn hw(&self) -> usize {
        self.height * self.width
    }
}

/// Dual-branch prototype cross-attention block. Appearance and motion
/// branches own independent weights; output channels equal input channels.
#[derive(Debug, Clone)]
pub struct ImaBlock {
    cfg: ImaConfig,
    sigma_k_a: Parameter,
    sigma_v_a: Parameter,
    sigma_k_m: Parameter,
    sigma_v_m: Parameter,
    fuse_w_a: Parameter,
    fuse_b_a: Parameter,
    fuse_w_m: Parameter,
    fuse_b_m: Parameter,
}

impl ImaBlock {
    pub fn new(cfg: ImaConfig, prefix: &str, rng: &mut impl Rng) -> ImaBlock {
        let c = cfg.channels;
        let (sigma_shape, fan_in) = if cfg.channel_fc {
            (vec![c, c], c)
        } else {
            (vec![cfg.hw(), cfg.hw()], cfg.hw())
        };
        let fuse_in = 2 * c; // X (C) ⊕ T (C' == C)
        ImaBlock {
            cfg,
            sigma_k_a: Parameter::uniform_init(format!("{prefix}.sigma_k_a"), &sigma_shape, fan_in, rng),
            sigma_v_a: Parameter::uniform_init(format!("{prefix}.sigma_v_a"), &sigma_shape, fan_in, rng),
            sigma_k_m: Parameter::uniform_init(format!("{prefix}.sigma_k_m"), &sigma_shape, fan_in, rng),
            sigma_v_m: Parameter::uniform_init(format!("{prefix}.sigma_v_m"), &sigma_shape, fan_in, rng),
            fuse_w_a: Parameter::uniform_init(
                format!("{prefix}.fuse_a.w"),
                &[c, fuse_in, 3, 3],
                fuse_in * 9,
                rng,
            ),
            fuse_b_a: Parameter::zeros(format!("{prefix}.fuse_a.b"), &[c]),
            fuse_w_m: Parameter::uniform_init(
                format!("{prefix}.fuse_m.w"),
                &[c, fuse_in, 3, 3],
                fuse_in * 9,
                rng,
            ),
            fuse_b_m: Parameter::zeros(format!("{prefix}.fuse_m.b"), &[c]),
        }
    }

    pub fn config(&self) -> &ImaConfig {
        &self.cfg
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        vec![
            &self.sigma_k_a,
            &self.sigma_v_a,
            &self.sigma_k_m,
            &self.sigma_v_m,
            &self.fuse_w_a,
            &self.fuse_b_a,
            &self.fuse_w_m,
            &self.fuse_b_m,
        ]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.sigma_k_a,
            &mut self.sigma_v_a,
            &mut self.sigma_k_m,
            &mut self.sigma_v_m,
            &mut self.fuse_w_a,
            &mut self.fuse_b_a,
            &mut self.fuse_w_m,
            &mut self.fuse_b_m,
        ]
    }

    fn sigma(&self, role: Role, branch: Stream) -> &Parameter {
        match (role, branch) {
            (Role::Key, Stream::Appearance) => &self.sigma_k_a,
            (Role::Value, Stream::Appearance) => &self.sigma_v_a,
            (Role::Key, Stream::Motion) => &self.sigma_k_m,
            (Role::Value, Stream::Motion) => &self.sigma_v_m,
        }
    }

    /// σ embedding of a correlation map (or raw features in bypass mode).
    /// Default mode is a learned linear map along the HW axis.
    pub fn embed_kv(&self, psi: &Tensor, role: Role, branch: Stream) -> Result<Tensor> {
        if psi.rank() != 2 || psi.shape()[1] != self.cfg.hw() {
            return Err(Error::shape(
                "embed_kv",
                psi.shape(),
                &[self.cfg.channels, self.cfg.hw()],
            ));
        }
        let w = self.sigma(role, branch).tensor();
        if self.cfg.channel_fc {
            w.matmul(psi)
        } else {
            psi.matmul(w)
        }
    }

    /// Full inter-modality pass over two C×HW maps. Returns the refined
    /// appearance and motion maps, same shapes as the inputs.
    pub fn forward(&self, x_a: &Tensor, x_m: &Tensor) -> Result<(Tensor, Tensor)> {
        if x_a.shape() != x_m.shape() {
            return Err(Error::shape("ima_forward", x_a.shape(), x_m.shape()));
        }
        let expect = [self.cfg.channels, self.cfg.hw()];
        if x_a.shape() != expect {
            return Err(Error::shape("ima_forward", x_a.shape(), &expect));
        }

        let psi_a = self.branch_features(x_a)?;
        let psi_m = self.branch_features(x_m)?;

        let k_a = self.embed_kv(&psi_a, Role::Key, Stream::Appearance)?;
        let v_a = self.embed_kv(&psi_a, Role::Value, Stream::Appearance)?;
        let k_m = self.embed_kv(&psi_m, Role::Key, Stream::Motion)?;
        let v_m = self.embed_kv(&psi_m, Role::Value, Stream::Motion)?;

        let phi = correspondence(&k_a, &k_m)?;
        let (t_a, t_m) = transfer(&phi, &v_a, &v_m)?;

        let out_a = self.fuse(x_a, &t_a, Stream::Appearance)?;
        let out_m = self.fuse(x_m, &t_m, Stream::Motion)?;
        Ok((out_a, out_m))
    }

    /// Correlation map in prototype mode, the raw features otherwise.
    fn branch_features(&self, x: &Tensor) -> Result<Tensor> {
        if self.cfg.use_prototypes {
            let s = soft_regions(x, self.cfg.region_softmax)?;
            let protos = aggregate(x, &s)?;
            Ok(self_correlate(&protos, x)?.into_tensor())
        } else {
            Ok(x.clone())
        }
    }

    /// `X' = Conv(X ⊕ T)` with optional relu.
    fn fuse(&self, x: &Tensor, transferred: &Tensor, branch: Stream) -> Result<Tensor> {
        let (w, b) = match branch {
            Stream::Appearance => (&self.fuse_w_a, &self.fuse_b_a),
            Stream::Motion => (&self.fuse_w_m, &self.fuse_b_m),
        };
        let stacked = x.concat(transferred, 0)?;
        let c_in = stacked.shape()[0];
        let map = stacked.reshape(&[c_in, self.cfg.height, self.cfg.width])?;
        let conv = map
            .conv2d(w.tensor(), 1)?
            .add_channel_bias(b.tensor())?;
        let conv = if self.cfg.fuse_relu { conv.relu() } else { conv };
        conv.reshape(&[self.cfg.channels, self.cfg.hw()])
    }
}

/// Prototype correspondence `Φ = K_A ⊗ K_Mᵀ`: entry (i, j) relates prototype
/// i of the appearance branch to prototype j of the motion branch.
pub fn correspondence(k_a: &Tensor, k_m: &Tensor) -> Result<Tensor> {
    if k_a.shape() != k_m.shape() {
        return Err(Error::shape("correspondence", k_a.shape(), k_m.shape()));
    }
    k_a.matmul(&k_m.transpose()?)
}

/// Cross-modal value transfer: `T_A = Softmax(Φ) ⊗ V_M` and
/// `T_M = Softmax(Φᵀ) ⊗ V_A`, with row-wise softmax, so each output row is a
/// convex mixture of the other branch's value rows. `Φ` is computed once by
/// the caller and reused transposed for the reverse direction.
pub fn transfer(phi: &Tensor, v_a: &Tensor, v_m: &Tensor) -> Result<(Tensor, Tensor)> {
    let t_a = phi.softmax(1)?.matmul(v_m)?;
    let t_m = phi.transpose()?.softmax(1)?.matmul(v_a)?;
    Ok((t_a, t_m))
}
