//! Prototype-attention video object segmentation at desk scale.
//!
//! Two feature streams (appearance and motion) are fused by prototype
//! cross-attention, and a per-video memory bank of sampled reference frames
//! feeds temporal context back into each query frame. Everything runs on
//! dense f64 tensors with reverse-mode differentiation so the whole pipeline
//! is checkable against finite differences and brute-force oracles.

pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod ifa;
pub mod ima;
pub mod network;
pub mod prototype;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Parameter, Tensor};
