//! Dense f64 tensors with tape-free reverse-mode differentiation.
//!
//! Every forward op that sees an input with `requires_grad` records its
//! parents and a backward closure on the output node; `backward` on a scalar
//! walks the resulting DAG in reverse creation order and accumulates
//! gradients into leaf nodes. Tensors are immutable once created and cheap to
//! clone (the payload sits behind an `Arc`), so frozen-model evaluation can
//! run concurrently across threads.

mod checkpoint;
mod linalg;
mod ops;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, TensorRecord, CHECKPOINT_VERSION};
pub use optim::{cosine_lr, Adam};

pub(crate) use linalg::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col};

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Context handed to backward closures.
pub(crate) struct BackCtx<'a> {
    pub out_data: &'a [f64],
    pub grad: &'a [f64],
    pub parents: &'a [Tensor],
}

/// Per-parent gradient contributions, `None` for parents that need none.
type BackwardFn = Box<dyn Fn(&BackCtx<'_>) -> Vec<Option<Vec<f64>>> + Send + Sync>;

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    parents: Vec<Tensor>,
    backward_fn: Option<BackwardFn>,
}

/// Dense row-major tensor of 64-bit floats.
#[derive(Clone)]
pub struct Tensor {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, grad={})",
            self.inner.id, self.inner.shape, self.inner.requires_grad
        )
    }
}

impl Tensor {
    fn from_parts(
        shape: Vec<usize>,
        data: Vec<f64>,
        requires_grad: bool,
        parents: Vec<Tensor>,
        backward_fn: Option<BackwardFn>,
    ) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                parents,
                backward_fn,
            }),
        }
    }

    /// New leaf tensor; errors if `data` does not fill `shape`.
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidArgument(format!(
                "tensor data length {} does not match shape {:?} (numel {})",
                data.len(),
                shape,
                numel
            )));
        }
        Ok(Tensor::from_parts(shape.to_vec(), data, false, vec![], None))
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![0.0; numel], false, vec![], None)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        let numel = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![value; numel], false, vec![], None)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::from_parts(vec![1], vec![value], false, vec![], None)
    }

    /// Leaf filled uniformly from `[lo, hi)`.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| rng.random_range(lo..hi)).collect();
        Tensor::from_parts(shape.to_vec(), data, false, vec![], None)
    }

    /// Marks a leaf as a differentiation root. Panics on non-leaf tensors:
    /// gradients are only ever requested at graph leaves.
    pub fn with_grad(self) -> Tensor {
        assert!(
            self.inner.backward_fn.is_none(),
            "with_grad is only valid on leaf tensors"
        );
        Tensor::from_parts(
            self.inner.shape.clone(),
            self.inner.data.clone(),
            true,
            vec![],
            None,
        )
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward_fn: BackwardFn,
    ) -> Tensor {
        let requires_grad = parents.iter().any(|p| p.inner.requires_grad);
        if requires_grad {
            Tensor::from_parts(shape, data, true, parents, Some(backward_fn))
        } else {
            Tensor::from_parts(shape, data, false, vec![], None)
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor with {} elements", self.numel());
        self.inner.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.lock().unwrap().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().unwrap() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.lock().unwrap();
        match slot.as_mut() {
            Some(buf) => {
                for (b, v) in buf.iter_mut().zip(g) {
                    *b += v;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode differentiation from a scalar.
    ///
    /// Gradients accumulate into every reachable leaf that `requires_grad`;
    /// calling twice without `zero_grad` doubles them. Intermediate node
    /// buffers are dropped as soon as they have been consumed.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.inner.requires_grad {
            return Err(Error::Contract(
                "backward on a tensor that does not require grad".into(),
            ));
        }

        // Parents are always created before children, so descending id order
        // is a valid reverse topological order.
        let mut nodes: Vec<Tensor> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack = vec![self.clone()];
        seen.insert(self.id());
        while let Some(t) = stack.pop() {
            for p in &t.inner.parents {
                if p.inner.requires_grad && seen.insert(p.id()) {
                    stack.push(p.clone());
                }
            }
            nodes.push(t);
        }
        nodes.sort_by(|a, b| b.id().cmp(&a.id()));

        self.accumulate_grad(&[1.0]);
        for node in &nodes {
            let grad = {
                let mut slot = node.inner.grad.lock().unwrap();
                if node.inner.backward_fn.is_some() {
                    slot.take()
                } else {
                    None
                }
            };
            let Some(grad) = grad else { continue };
            let f = node.inner.backward_fn.as_ref().unwrap();
            let ctx = BackCtx {
                out_data: &node.inner.data,
                grad: &grad,
                parents: &node.inner.parents,
            };
            let parent_grads = f(&ctx);
            debug_assert_eq!(parent_grads.len(), node.inner.parents.len());
            for (p, pg) in node.inner.parents.iter().zip(parent_grads) {
                if let (Some(pg), true) = (pg, p.inner.requires_grad) {
                    p.accumulate_grad(&pg);
                }
            }
        }
        Ok(())
    }

    /// True when no element is NaN or infinite.
    pub fn is_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }
}

/// Named trainable tensor.
///
/// The optimizer replaces the wrapped tensor wholesale on each step; forward
/// passes clone the current leaf, so gradients land in the tensor that
/// actually produced the loss.
#[derive(Clone, Debug)]
pub struct Parameter {
    name: String,
    tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Parameter {
        Parameter {
            name: name.into(),
            tensor: tensor.with_grad(),
        }
    }

    /// Uniform init in `±sqrt(1/fan_in)`.
    pub fn uniform_init(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> Parameter {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        Parameter::new(name, Tensor::uniform(shape, -bound, bound, rng))
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Parameter {
        Parameter::new(name, Tensor::zeros(shape))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn numel(&self) -> usize {
        self.tensor.numel()
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tensor.grad()
    }

    pub fn zero_grad(&self) {
        self.tensor.zero_grad();
    }

    /// Replaces the stored values, keeping the shape. Used by the optimizer
    /// and by checkpoint loading.
    pub fn set_data(&mut self, data: Vec<f64>) -> Result<()> {
        if data.len() != self.tensor.numel() {
            return Err(Error::shape(
                "set_data",
                self.tensor.shape(),
                &[data.len()],
            ));
        }
        self.tensor = Tensor::from_parts(self.tensor.shape().to_vec(), data, true, vec![], None);
        Ok(())
    }
}
