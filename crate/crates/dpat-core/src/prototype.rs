//! Prototype generation and self-correlation.
//!
//! A feature map X (C×HW) is summarized into C' prototype vectors by soft
//! region aggregation, and each prototype is then scored against every pixel
//! by cosine similarity. Both attention blocks build on these three steps.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Axis convention for the region softmax.
///
/// `Spatial` normalizes each channel over the HW axis, making every channel a
/// spatial attention map that sums to 1, so prototypes are convex
/// combinations of pixel features. `Channel` normalizes each pixel over the
/// channel axis instead; it is exposed for ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionSoftmax {
    Spatial,
    Channel,
}

/// C' region-aggregated feature vectors, stored as columns of a C×C' matrix.
#[derive(Debug, Clone)]
pub struct PrototypeSet {
    protos: Tensor,
}

impl PrototypeSet {
    /// Wraps an existing C×C' matrix as a prototype set (used by the
    /// prototype-bypass ablation, where raw pixel features stand in).
    pub fn from_tensor(protos: Tensor) -> Result<PrototypeSet> {
        if protos.rank() != 2 {
            return Err(Error::shape("PrototypeSet::from_tensor", protos.shape(), &[]));
        }
        Ok(PrototypeSet { protos })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.protos
    }

    /// Feature size C.
    pub fn feature_size(&self) -> usize {
        self.protos.shape()[0]
    }

    /// Prototype count C'.
    pub fn count(&self) -> usize {
        self.protos.shape()[1]
    }
}

/// Cosine-similarity profile of every prototype over every pixel (C'×HW).
#[derive(Debug, Clone)]
pub struct CorrelationMap {
    corr: Tensor,
}

impl CorrelationMap {
    pub fn tensor(&self) -> &Tensor {
        &self.corr
    }

    pub fn into_tensor(self) -> Tensor {
        self.corr
    }
}

/// Soft object regions from a C×HW feature map.
///
/// With [`RegionSoftmax::Spatial`] every output row sums to 1 over HW and all
/// values lie in (0,1).
pub fn soft_regions(x: &Tensor, mode: RegionSoftmax) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::shape("soft_regions", x.shape(), &[]));
    }
    match mode {
        RegionSoftmax::Spatial => x.softmax(1),
        RegionSoftmax::Channel => x.softmax(0),
    }
}

/// Region-weighted aggregation `P = X ⊗ Sᵀ`.
///
/// When the rows of `s` sum to 1 each prototype column is a convex
/// combination of pixel feature columns.
pub fn aggregate(x: &Tensor, s: &Tensor) -> Result<PrototypeSet> {
    if x.shape() != s.shape() {
        return Err(Error::shape("aggregate", x.shape(), s.shape()));
    }
    let protos = x.matmul(&s.transpose()?)?;
    Ok(PrototypeSet { protos })
}

/// Cosine similarity of every prototype against every pixel feature:
/// `Ψ = N(P)ᵀ ⊗ N(X)` with per-column L2 normalization.
pub fn self_correlate(protos: &PrototypeSet, x: &Tensor) -> Result<CorrelationMap> {
    if x.rank() != 2 || x.shape()[0] != protos.feature_size() {
        return Err(Error::shape("self_correlate", protos.tensor().shape(), x.shape()));
    }
    let np = protos.tensor().l2_normalize_cols()?;
    let nx = x.l2_normalize_cols()?;
    let corr = np.transpose()?.matmul(&nx)?;
    Ok(CorrelationMap { corr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn soft_regions_constant_input_is_uniform() {
        let x = Tensor::full(&[3, 8], 1.7);
        let s = soft_regions(&x, RegionSoftmax::Spatial).unwrap();
        for &v in s.data() {
            assert!((v - 1.0 / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_regions_rows_sum_to_one() {
        let mut r = rng(1);
        let x = Tensor::uniform(&[5, 12], -4.0, 4.0, &mut r);
        let s = soft_regions(&x, RegionSoftmax::Spatial).unwrap();
        for row in 0..5 {
            let sum: f64 = s.data()[row * 12..(row + 1) * 12].iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn soft_regions_spike_dominates() {
        // One spike of magnitude 20 per channel: softmax weight exceeds 0.99.
        let mut data = vec![0.0; 2 * 16];
        data[3] = 20.0;
        data[16 + 11] = 20.0;
        let x = Tensor::from_vec(data, &[2, 16]).unwrap();
        let s = soft_regions(&x, RegionSoftmax::Spatial).unwrap();
        assert!(s.data()[3] > 0.99);
        assert!(s.data()[16 + 11] > 0.99);
    }

    #[test]
    fn soft_regions_channel_mode_normalizes_pixels() {
        let mut r = rng(2);
        let x = Tensor::uniform(&[4, 6], -2.0, 2.0, &mut r);
        let s = soft_regions(&x, RegionSoftmax::Channel).unwrap();
        for p in 0..6 {
            let sum: f64 = (0..4).map(|c| s.data()[c * 6 + p]).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn aggregate_uniform_weights_give_spatial_mean() {
        let mut r = rng(3);
        let x = Tensor::uniform(&[3, 10], -1.0, 1.0, &mut r);
        let s = Tensor::full(&[3, 10], 0.1);
        let p = aggregate(&x, &s).unwrap();
        for c in 0..3 {
            let mean: f64 = x.data()[c * 10..(c + 1) * 10].iter().sum::<f64>() / 10.0;
            for j in 0..3 {
                assert!((p.tensor().data()[c * 3 + j] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_one_hot_weights_pick_pixels() {
        let mut r = rng(4);
        let x = Tensor::uniform(&[2, 5], -1.0, 1.0, &mut r);
        let mut s = vec![0.0; 2 * 5];
        s[0 * 5 + 3] = 1.0; // prototype 0 = pixel 3
        s[1 * 5 + 1] = 1.0; // prototype 1 = pixel 1
        let s = Tensor::from_vec(s, &[2, 5]).unwrap();
        let p = aggregate(&x, &s).unwrap();
        for c in 0..2 {
            assert_eq!(p.tensor().data()[c * 2 + 0], x.data()[c * 5 + 3]);
            assert_eq!(p.tensor().data()[c * 2 + 1], x.data()[c * 5 + 1]);
        }
    }

    #[test]
    fn aggregate_matches_weighted_sum_oracle() {
        let mut r = rng(5);
        let x = Tensor::uniform(&[4, 7], -2.0, 2.0, &mut r);
        let s = soft_regions(&x, RegionSoftmax::Spatial).unwrap();
        let p = aggregate(&x, &s).unwrap();
        for c in 0..4 {
            for j in 0..4 {
                let mut want = 0.0;
                for px in 0..7 {
                    want += x.data()[c * 7 + px] * s.data()[j * 7 + px];
                }
                let got = p.tensor().data()[c * 4 + j];
                assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn aggregate_rejects_shape_mismatch() {
        let x = Tensor::zeros(&[3, 8]);
        let s = Tensor::zeros(&[3, 9]);
        assert!(aggregate(&x, &s).is_err());
    }

    #[test]
    fn self_correlate_pixel_prototype_scores_one() {
        let mut r = rng(6);
        let x = Tensor::uniform(&[4, 6], 0.1, 1.0, &mut r);
        // prototype 0 = pixel 2's feature column
        let mut protos = vec![0.0; 4 * 2];
        for c in 0..4 {
            protos[c * 2] = x.data()[c * 6 + 2];
            protos[c * 2 + 1] = r.random_range(-1.0..1.0);
        }
        let p = PrototypeSet::from_tensor(Tensor::from_vec(protos, &[4, 2]).unwrap()).unwrap();
        let psi = self_correlate(&p, &x).unwrap();
        assert!((psi.tensor().data()[0 * 6 + 2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn self_correlate_orthogonal_pair_scores_zero() {
        let x = Tensor::from_vec(vec![1.0, 0.0], &[2, 1]).unwrap();
        let p = PrototypeSet::from_tensor(Tensor::from_vec(vec![0.0, 1.0], &[2, 1]).unwrap())
            .unwrap();
        let psi = self_correlate(&p, &x).unwrap();
        assert!(psi.tensor().data()[0].abs() < 1e-9);
    }

    #[test]
    fn self_correlate_zero_column_gives_zero_row() {
        let x = Tensor::from_vec(vec![1.0, 0.0, 0.0, 0.0], &[2, 2]).unwrap();
        let p = PrototypeSet::from_tensor(Tensor::from_vec(vec![0.0, 0.0], &[2, 1]).unwrap())
            .unwrap();
        let psi = self_correlate(&p, &x).unwrap();
        assert_eq!(psi.tensor().data(), &[0.0, 0.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_correlation_bounded_by_one(c in 1usize..=6, hw in 1usize..=12, seed in 0u64..1000) {
            let mut r = rng(seed);
            let x = Tensor::uniform(&[c, hw], -3.0, 3.0, &mut r);
            let s = soft_regions(&x, RegionSoftmax::Spatial).unwrap();
            let p = aggregate(&x, &s).unwrap();
            let psi = self_correlate(&p, &x).unwrap();
            for &v in psi.tensor().data() {
                prop_assert!(v >= -1.0 - 1e-9 && v <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn prop_prototypes_stay_in_channel_envelope(c in 1usize..=6, hw in 2usize..=12, seed in 0u64..1000) {
            let mut r = rng(seed);
            let x = Tensor::uniform(&[c, hw], -3.0, 3.0, &mut r);
            let s = soft_regions(&x, RegionSoftmax::Spatial).unwrap();
            let p = aggregate(&x, &s).unwrap();
            for ch in 0..c {
                let row = &x.data()[ch * hw..(ch + 1) * hw];
                let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for j in 0..p.count() {
                    let v = p.tensor().data()[ch * p.count() + j];
                    prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                }
            }
        }

        #[test]
        fn prop_correlation_invariant_to_column_rescale(seed in 0u64..1000) {
            // Cosine is scale covariant: positive per-column rescaling of x
            // leaves the correlation map unchanged.
            let mut r = rng(seed);
            let c = 4;
            let hw = 9;
            let x = Tensor::uniform(&[c, hw], 0.1, 2.0, &mut r);
            let s = soft_regions(&x, RegionSoftmax::Spatial).unwrap();
            let p = aggregate(&x, &s).unwrap();
            let base = self_correlate(&p, &x).unwrap();

            let scales: Vec<f64> = (0..hw).map(|_| r.random_range(0.1..10.0)).collect();
            let mut scaled = x.data().to_vec();
            for ch in 0..c {
                for px in 0..hw {
                    scaled[ch * hw + px] *= scales[px];
                }
            }
            let xs = Tensor::from_vec(scaled, &[c, hw]).unwrap();
            let rescaled = self_correlate(&p, &xs).unwrap();
            for (a, b) in base.tensor().data().iter().zip(rescaled.tensor().data()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
