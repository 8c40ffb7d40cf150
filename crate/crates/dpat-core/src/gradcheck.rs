//! Finite-difference gradient verification.
//!
//! The checks here are deliberately independent of the reverse-mode engine:
//! they only evaluate forward passes at perturbed inputs and compare the
//! resulting central differences against whatever analytic gradient the
//! caller hands in.

use crate::error::Result;
use crate::tensor::Tensor;

/// Default central-difference step.
pub const DEFAULT_H: f64 = 1e-5;

/// Relative error with an absolute floor so near-zero pairs do not blow up.
pub fn relative_error(numeric: f64, analytic: f64) -> f64 {
    let denom = (numeric.abs() + analytic.abs()).max(1e-8);
    (numeric - analytic).abs() / denom
}

/// Deterministic coordinate sample: `count` distinct indices out of `numel`,
/// spread by a fixed stride pattern seeded with `salt`.
pub fn sample_coords(numel: usize, count: usize, salt: u64) -> Vec<usize> {
    if numel == 0 {
        return vec![];
    }
    let count = count.min(numel);
    let mut coords = Vec::with_capacity(count);
    let mut state = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    let mut seen = std::collections::HashSet::new();
    while coords.len() < count {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let idx = (state >> 33) as usize % numel;
        if seen.insert(idx) {
            coords.push(idx);
        }
    }
    coords.sort_unstable();
    coords
}

/// Worst observed coordinate from a gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub checked: usize,
}

/// Checks `d loss / d x` at the sampled coordinates of a single leaf input.
///
/// `build_loss` must map a leaf tensor of the given shape to a scalar loss;
/// it is re-run at perturbed inputs for the numeric side and once with a
/// grad-enabled leaf for the analytic side.
pub fn check_leaf_gradient(
    build_loss: &dyn Fn(&Tensor) -> Result<Tensor>,
    data: &[f64],
    shape: &[usize],
    coords: &[usize],
    h: f64,
) -> Result<GradCheckReport> {
    let leaf = Tensor::from_vec(data.to_vec(), shape)?.with_grad();
    let loss = build_loss(&leaf)?;
    loss.backward()?;
    let analytic = leaf.grad().expect("leaf received no gradient");

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_coord: 0,
        checked: 0,
    };
    let mut buf = data.to_vec();
    for &i in coords {
        let orig = buf[i];
        buf[i] = orig + h;
        let plus = build_loss(&Tensor::from_vec(buf.clone(), shape)?)?.item();
        buf[i] = orig - h;
        let minus = build_loss(&Tensor::from_vec(buf.clone(), shape)?)?.item();
        buf[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(numeric, analytic[i]);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_coord = i;
        }
        report.checked += 1;
    }
    Ok(report)
}
