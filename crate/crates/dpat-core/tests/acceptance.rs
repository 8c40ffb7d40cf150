//! Acceptance suite. One test per criterion; each prints a PASS line with
//! the measured evidence. Tests share a lock so the timing-sensitive ones
//! are not skewed by parallel siblings.

use std::sync::{LazyLock, Mutex, MutexGuard};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use dpat_core::data::{self, gen_synthetic, GenConfig, Mask};
use dpat_core::gradcheck::relative_error;
use dpat_core::ifa::{sample_reference_indices, IfaBlock, IfaConfig};
use dpat_core::ima::{correspondence, transfer, ImaBlock, ImaConfig};
use dpat_core::metrics::{boundary_accuracy, boundary_tolerance, evaluate, region_similarity};
use dpat_core::network::{
    bench_model, infer_video, run_ablation, standard_grid, AblationOptions, Banks, DpaModel,
    ModelConfig,
};
use dpat_core::prototype::{aggregate, self_correlate, soft_regions, PrototypeSet, RegionSoftmax};
use dpat_core::tensor::Tensor;
use dpat_core::Result;

static SEQUENTIAL: LazyLock<Mutex<()>> = LazyLock::new(|| Mutex::new(()));

fn lock() -> MutexGuard<'static, ()> {
    SEQUENTIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

const H_FD: f64 = 1e-5;

/// Central-difference check of `loss` against `analytic` at the given
/// coordinates of one input vector, via a rebuild closure.
fn fd_max_err_h(
    mut eval: impl FnMut(&[f64]) -> f64,
    base: &[f64],
    analytic: &[f64],
    coords: &[usize],
    h: f64,
) -> f64 {
    let mut buf = base.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = buf[i];
        buf[i] = orig + h;
        let plus = eval(&buf);
        buf[i] = orig - h;
        let minus = eval(&buf);
        buf[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(numeric, analytic[i]));
    }
    worst
}

fn fd_max_err(
    eval: impl FnMut(&[f64]) -> f64,
    base: &[f64],
    analytic: &[f64],
    coords: &[usize],
) -> f64 {
    fd_max_err_h(eval, base, analytic, coords, H_FD)
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient suite
// ---------------------------------------------------------------------------

/// Differentiable-op checks: builds a scalar loss around each op and compares
/// the reverse-mode gradient of the leaf input with central differences.
fn op_gradient_sweep() {
    let mut r = rng(101);
    let weights2 = Tensor::uniform(&[3, 4], -1.0, 1.0, &mut r);
    let weights3 = Tensor::uniform(&[2, 4, 4], -1.0, 1.0, &mut r);
    let weights_up = Tensor::uniform(&[2, 8, 8], -1.0, 1.0, &mut r);
    let weights_pool = Tensor::uniform(&[2, 2, 2], -1.0, 1.0, &mut r);
    let other2 = Tensor::uniform(&[3, 4], 0.3, 1.3, &mut r);
    let mat_b = Tensor::uniform(&[4, 5], -1.0, 1.0, &mut r);
    let weights_mat = Tensor::uniform(&[3, 5], -1.0, 1.0, &mut r);
    let conv_w = Tensor::uniform(&[3, 2, 3, 3], -0.4, 0.4, &mut r);
    let conv_w_d2 = Tensor::uniform(&[2, 2, 3, 3], -0.4, 0.4, &mut r);
    let bias = Tensor::uniform(&[2], -0.5, 0.5, &mut r);
    let target: Vec<u8> = (0..16).map(|i| (i % 2) as u8).collect();

    type Case<'a> = (&'a str, Vec<usize>, Box<dyn Fn(&Tensor) -> Result<Tensor> + 'a>);
    let cases: Vec<Case> = vec![
        ("matmul", vec![3, 4], Box::new(|x| x.matmul(&mat_b)?.mul(&weights_mat)?.sum().reshape(&[1]))),
        ("transpose", vec![3, 4], Box::new(|x| {
            x.transpose()?.matmul(&weights_mat.narrow(0, 0, 3)?)?.sum().reshape(&[1])
        })),
        ("softmax", vec![3, 4], Box::new(|x| x.softmax(1)?.mul(&weights2)?.sum().reshape(&[1]))),
        ("l2_normalize", vec![3, 4], Box::new(|x| {
            x.add(&other2)?.l2_normalize_cols()?.mul(&weights2)?.sum().reshape(&[1])
        })),
        ("concat", vec![3, 4], Box::new(|x| {
            x.concat(&other2, 0)?.narrow(0, 1, 3)?.mul(&weights2.narrow(0, 0, 3)?)?.sum().reshape(&[1])
        })),
        ("narrow", vec![3, 4], Box::new(|x| {
            x.narrow(1, 1, 2)?.mul(&weights2.narrow(1, 0, 2)?)?.sum().reshape(&[1])
        })),
        ("relu", vec![3, 4], Box::new(|x| Ok(x.add(&other2)?.relu().mul(&weights2)?.sum()))),
        ("add", vec![3, 4], Box::new(|x| x.add(&other2)?.mul(&weights2)?.sum().reshape(&[1]))),
        ("sub", vec![3, 4], Box::new(|x| x.sub(&other2)?.mul(&weights2)?.sum().reshape(&[1]))),
        ("mul", vec![3, 4], Box::new(|x| x.mul(&other2)?.mul(&weights2)?.sum().reshape(&[1]))),
        ("scale", vec![3, 4], Box::new(|x| x.scale(-1.7).mul(&weights2)?.sum().reshape(&[1]))),
        ("add_scalar", vec![3, 4], Box::new(|x| x.add_scalar(0.9).mul(&weights2)?.sum().reshape(&[1]))),
        ("sum", vec![3, 4], Box::new(|x| Ok(x.mul(&weights2)?.sum()))),
        ("mean", vec![3, 4], Box::new(|x| Ok(x.mul(&weights2)?.mean()))),
        ("reshape", vec![3, 4], Box::new(|x| {
            let w6 = Tensor::uniform(&[2, 6], -1.0, 1.0, &mut rng(6));
            x.reshape(&[2, 6])?.softmax(1)?.mul(&w6)?.sum().reshape(&[1])
        })),
        ("conv2d", vec![2, 4, 4], Box::new(|x| {
            x.conv2d(&conv_w, 1)?.mul(&Tensor::uniform(&[3, 4, 4], -1.0, 1.0, &mut rng(7)))?.sum().reshape(&[1])
        })),
        ("conv2d_dilated", vec![2, 4, 4], Box::new(|x| {
            x.conv2d(&conv_w_d2, 2)?.mul(&weights3)?.sum().reshape(&[1])
        })),
        ("add_channel_bias", vec![2, 4, 4], Box::new(|x| {
            x.add_channel_bias(&bias)?.mul(&weights3)?.sum().reshape(&[1])
        })),
        ("avgpool2", vec![2, 4, 4], Box::new(|x| x.avgpool2()?.mul(&weights_pool)?.sum().reshape(&[1]))),
        ("upsample2", vec![2, 4, 4], Box::new(|x| {
            x.upsample2_nearest()?.mul(&weights_up)?.sum().reshape(&[1])
        })),
        ("global_avg_pool", vec![2, 4, 4], Box::new(|x| {
            x.global_avg_pool()?.broadcast_spatial(4, 4)?.mul(&weights3)?.sum().reshape(&[1])
        })),
        ("cross_entropy", vec![2, 4, 4], Box::new(|x| x.cross_entropy_binary(&target))),
    ];

    for (name, shape, build) in &cases {
        let numel: usize = shape.iter().product();
        let base: Vec<f64> = {
            let mut rr = rng(500 + name.len() as u64);
            (0..numel).map(|_| rr.random_range(-1.0..1.0)).collect()
        };
        let leaf = Tensor::from_vec(base.clone(), shape).unwrap().with_grad();
        let loss = build(&leaf).unwrap();
        loss.backward().unwrap();
        let analytic = leaf.grad().expect("op produced no gradient");
        let coords: Vec<usize> = (0..numel).collect();
        let err = fd_max_err(
            |data| {
                let t = Tensor::from_vec(data.to_vec(), shape).unwrap();
                build(&t).unwrap().item()
            },
            &base,
            &analytic,
            &coords,
        );
        assert!(err < 1e-5, "op {name}: max rel err {err}");
    }
}

fn ima_block_gradient() -> f64 {
    let mut r = rng(31);
    let cfg = ImaConfig {
        channels: 4,
        height: 2,
        width: 2,
        use_prototypes: true,
        region_softmax: RegionSoftmax::Spatial,
        channel_fc: false,
        fuse_relu: true,
    };
    let block = ImaBlock::new(cfg, "acc_ima", &mut r);
    let x_m = Tensor::uniform(&[4, 4], -1.0, 1.0, &mut r);
    let wa = Tensor::uniform(&[4, 4], -1.0, 1.0, &mut r);
    let wm = Tensor::uniform(&[4, 4], -1.0, 1.0, &mut r);
    let base: Vec<f64> = Tensor::uniform(&[4, 4], -1.0, 1.0, &mut r).data().to_vec();

    let leaf = Tensor::from_vec(base.clone(), &[4, 4]).unwrap().with_grad();
    let (oa, om) = block.forward(&leaf, &x_m).unwrap();
    oa.mul(&wa)
        .unwrap()
        .sum()
        .add(&om.mul(&wm).unwrap().sum())
        .unwrap()
        .backward()
        .unwrap();
    let analytic = leaf.grad().unwrap();
    let coords: Vec<usize> = (0..16).collect();
    fd_max_err(
        |dat| {
            let t = Tensor::from_vec(dat.to_vec(), &[4, 4]).unwrap();
            let (oa, om) = block.forward(&t, &x_m).unwrap();
            oa.mul(&wa)
                .unwrap()
                .sum()
                .add(&om.mul(&wm).unwrap().sum())
                .unwrap()
                .item()
        },
        &base,
        &analytic,
        &coords,
    )
}

fn ifa_block_gradient() -> f64 {
    let mut r = rng(33);
    let cfg = IfaConfig {
        channels: 4,
        height: 2,
        width: 2,
        use_prototypes: true,
        region_softmax: RegionSoftmax::Spatial,
        fuse_relu: true,
        n_refs: 2,
    };
    let block = IfaBlock::new(cfg, "acc_ifa", &mut r);
    let ref_b = Tensor::uniform(&[4, 4], -1.0, 1.0, &mut r);
    let weights = Tensor::uniform(&[4, 4], -1.0, 1.0, &mut r);
    let query = Tensor::uniform(&[4, 4], -1.0, 1.0, &mut r);

    // Perturb one reference frame: the gradient must flow through the bank.
    let base: Vec<f64> = Tensor::uniform(&[4, 4], -1.0, 1.0, &mut r).data().to_vec();
    let leaf = Tensor::from_vec(base.clone(), &[4, 4]).unwrap().with_grad();
    let bank = block
        .build_memory(&[leaf.clone(), ref_b.clone()], vec![0, 1])
        .unwrap();
    block
        .forward(&query, &bank)
        .unwrap()
        .mul(&weights)
        .unwrap()
        .sum()
        .backward()
        .unwrap();
    let analytic = leaf.grad().unwrap();
    let coords: Vec<usize> = (0..16).collect();
    let bank_err = fd_max_err(
        |dat| {
            let t = Tensor::from_vec(dat.to_vec(), &[4, 4]).unwrap();
            let bank = block.build_memory(&[t, ref_b.clone()], vec![0, 1]).unwrap();
            block
                .forward(&query, &bank)
                .unwrap()
                .mul(&weights)
                .unwrap()
                .sum()
                .item()
        },
        &base,
        &analytic,
        &coords,
    );

    // And through the query path.
    let leaf_q = Tensor::from_vec(base.clone(), &[4, 4]).unwrap().with_grad();
    let bank = block
        .build_memory(&[ref_b.clone(), ref_b.clone()], vec![0, 1])
        .unwrap();
    block
        .forward(&leaf_q, &bank)
        .unwrap()
        .mul(&weights)
        .unwrap()
        .sum()
        .backward()
        .unwrap();
    let analytic_q = leaf_q.grad().unwrap();
    let query_err = fd_max_err(
        |dat| {
            let t = Tensor::from_vec(dat.to_vec(), &[4, 4]).unwrap();
            block
                .forward(&t, &bank)
                .unwrap()
                .mul(&weights)
                .unwrap()
                .sum()
                .item()
        },
        &base,
        &analytic_q,
        &coords,
    );
    bank_err.max(query_err)
}

fn full_model_gradient() -> f64 {
    let mut cfg = ModelConfig::new(32, 32);
    cfg.seed = 9;
    let mut model = DpaModel::new(cfg).unwrap();
    // The default init contracts activations layer by layer, pushing deep
    // gradients below what h=1e-5 central differences can resolve in f64.
    // The check verifies the composed backward graph, so evaluate it at a
    // signal-preserving weight scale instead.
    for p in model.parameters_mut() {
        let scaled: Vec<f64> = p.tensor().data().iter().map(|v| v * 2.5).collect();
        p.set_data(scaled).unwrap();
    }
    let model = model;
    let mut r = rng(35);
    let rgb0 = Tensor::uniform(&[3, 32, 32], 0.0, 1.0, &mut r);
    let flow0 = Tensor::uniform(&[3, 32, 32], 0.0, 1.0, &mut r);
    let rgb1 = Tensor::uniform(&[3, 32, 32], 0.0, 1.0, &mut r);
    let flow1 = Tensor::uniform(&[3, 32, 32], 0.0, 1.0, &mut r);
    let target: Vec<u8> = (0..32 * 32).map(|_| r.random_range(0..2u8)).collect();

    let loss_for = |model: &DpaModel, rgb0: &Tensor| -> f64 {
        let e0 = model.encode(rgb0, &flow0).unwrap();
        let e1 = model.encode(&rgb1, &flow1).unwrap();
        let banks = model.build_banks(&[&e0, &e1], vec![0, 1]).unwrap();
        let logits = model.head_forward(&e0, &banks).unwrap();
        logits.cross_entropy_binary(&target).unwrap().item()
    };

    // Analytic gradients from one backward pass.
    let rgb_leaf = rgb0.clone().with_grad();
    let e0 = model.encode(&rgb_leaf, &flow0).unwrap();
    let e1 = model.encode(&rgb1, &flow1).unwrap();
    let banks = model.build_banks(&[&e0, &e1], vec![0, 1]).unwrap();
    let logits = model.head_forward(&e0, &banks).unwrap();
    model.zero_grad();
    logits.cross_entropy_binary(&target).unwrap().backward().unwrap();

    let mut worst = 0.0f64;

    // Coordinates are probed where the gradient actually carries signal:
    // accumulated f64 round-off in a ~3M-parameter forward is ~1e-13, so
    // central differences cannot resolve gradients near zero, while a wrong
    // analytic value at a large-gradient coordinate is still caught.
    let top_coords = |analytic: &[f64], count: usize, floor: f64| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..analytic.len()).collect();
        idx.sort_by(|&a, &b| analytic[b].abs().partial_cmp(&analytic[a].abs()).unwrap());
        idx.into_iter()
            .take(count)
            .filter(|&i| analytic[i].abs() > floor)
            .collect()
    };

    // Input-pixel gradients.
    let analytic_in = rgb_leaf.grad().unwrap();
    let in_coords = top_coords(&analytic_in, 8, 1e-7);
    assert!(!in_coords.is_empty(), "no measurable input gradient");
    let err = fd_max_err(
        |dat| {
            let t = Tensor::from_vec(dat.to_vec(), &[3, 32, 32]).unwrap();
            loss_for(&model, &t)
        },
        rgb0.data(),
        &analytic_in,
        &in_coords,
    );
    worst = worst.max(err);

    // A spread of parameter tensors across all subsystems.
    let names: Vec<String> = model.parameters().iter().map(|p| p.name().to_string()).collect();
    for probe in [
        "enc_a.b1.c1.w",
        "enc_m.b3.c2.w",
        "ima4.sigma_k_a",
        "ima5.fuse_m.w",
        "ifa_a.q",
        "ifa_m.fuse.w",
        "fuse5_a.w",
        "aspp.d2.w",
        "dec.up2.w",
        "dec.head.w",
    ] {
        let idx = names.iter().position(|n| n == probe).unwrap_or_else(|| {
            panic!("parameter {probe} not found");
        });
        let base: Vec<f64> = model.parameters()[idx].tensor().data().to_vec();
        let analytic = model.parameters()[idx]
            .grad()
            .unwrap_or_else(|| panic!("{probe} received no gradient"));
        let coords = top_coords(&analytic, 4, 1e-7);
        assert!(!coords.is_empty(), "{probe}: no measurable gradient");
        let err = fd_max_err(
            |dat| {
                let mut m = model.clone();
                m.parameters_mut()[idx].set_data(dat.to_vec()).unwrap();
                loss_for(&m, &rgb0)
            },
            &base,
            &analytic,
            &coords,
        );
        worst = worst.max(err);
    }
    worst
}

#[test]
fn acceptance_1_gradient_suite() {
    let _guard = lock();
    let t0 = Instant::now();
    op_gradient_sweep();
    let ima_err = ima_block_gradient();
    assert!(ima_err < 1e-5, "composed IMA block: max rel err {ima_err}");
    let ifa_err = ifa_block_gradient();
    assert!(ifa_err < 1e-5, "composed IFA block: max rel err {ifa_err}");
    let model_err = full_model_gradient();
    assert!(model_err < 1e-4, "full model: max rel err {model_err}");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "gradient suite took {elapsed:.1}s, budget 300s");
    println!(
        "ACCEPTANCE 1 (gradient suite): PASS — ops < 1e-5, IMA {ima_err:.2e}, IFA {ifa_err:.2e}, full model {model_err:.2e} < 1e-4, {elapsed:.1}s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: normalization / convexity invariants
// ---------------------------------------------------------------------------

#[test]
fn acceptance_2_normalization_convexity() {
    let _guard = lock();
    let cases = 1000;

    // softmax slice sums
    for i in 0..cases {
        let mut r = rng(2_000 + i);
        let rows = r.random_range(1..=6);
        let cols = r.random_range(1..=12);
        let axis = r.random_range(0..2usize);
        let x = Tensor::uniform(&[rows, cols], -30.0, 30.0, &mut r);
        let y = x.softmax(axis).unwrap();
        let (outer, len, inner) = match axis {
            0 => (1, rows, cols),
            _ => (rows, cols, 1),
        };
        for o in 0..outer {
            for inn in 0..inner {
                let s: f64 = (0..len).map(|j| y.data()[(o * len + j) * inner + inn]).sum();
                assert!((s - 1.0).abs() < 1e-9, "case {i}: softmax slice sum {s}");
            }
        }
    }

    // Ψ1 bounds + prototype convex envelopes
    for i in 0..cases {
        let mut r = rng(3_000 + i);
        let c = r.random_range(1..=6);
        let hw = r.random_range(2..=12);
        let x = Tensor::uniform(&[c, hw], -3.0, 3.0, &mut r);
        let s = soft_regions(&x, RegionSoftmax::Spatial).unwrap();
        let protos = aggregate(&x, &s).unwrap();
        for ch in 0..c {
            let row = &x.data()[ch * hw..(ch + 1) * hw];
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for j in 0..protos.count() {
                let v = protos.tensor().data()[ch * protos.count() + j];
                assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "case {i}: prototype outside envelope");
            }
        }
        let psi = self_correlate(&protos, &x).unwrap();
        for &v in psi.tensor().data() {
            assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&v), "case {i}: psi1 {v}");
        }
    }

    // Ψ2 bounds and temporal-read convexity through the IFA block
    for i in 0..cases {
        let mut r = rng(4_000 + i);
        let cfg = IfaConfig {
            channels: 3,
            height: 2,
            width: 2,
            use_prototypes: true,
            region_softmax: RegionSoftmax::Spatial,
            fuse_relu: true,
            n_refs: 2,
        };
        let block = IfaBlock::new(cfg, "acc2_ifa", &mut r);
        let feats: Vec<Tensor> = (0..2)
            .map(|_| Tensor::uniform(&[3, 4], -2.0, 2.0, &mut r))
            .collect();
        let bank = block.build_memory(&feats, vec![0, 1]).unwrap();
        let y = Tensor::uniform(&[3, 4], -2.0, 2.0, &mut r);
        let s = soft_regions(&y, RegionSoftmax::Spatial).unwrap();
        let protos = aggregate(&y, &s).unwrap();
        let read = block.temporal_read(&protos, &bank).unwrap();
        let cols = bank.columns();
        for row in 0..3 {
            let vals = &bank.values().data()[row * cols..(row + 1) * cols];
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for k in 0..read.shape()[1] {
                let v = read.data()[row * read.shape()[1] + k];
                assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "case {i}: read outside hull");
            }
        }
        let psi2 = self_correlate(&PrototypeSet::from_tensor(read).unwrap(), &y).unwrap();
        for &v in psi2.tensor().data() {
            assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&v), "case {i}: psi2 {v}");
        }
    }

    // cross-modal transfer convexity
    for i in 0..cases {
        let mut r = rng(5_000 + i);
        let k_a = Tensor::uniform(&[4, 6], -2.0, 2.0, &mut r);
        let k_m = Tensor::uniform(&[4, 6], -2.0, 2.0, &mut r);
        let v_a = Tensor::uniform(&[4, 6], -2.0, 2.0, &mut r);
        let v_m = Tensor::uniform(&[4, 6], -2.0, 2.0, &mut r);
        let phi = correspondence(&k_a, &k_m).unwrap();
        let (t_a, t_m) = transfer(&phi, &v_a, &v_m).unwrap();
        for (t, v) in [(&t_a, &v_m), (&t_m, &v_a)] {
            for col in 0..6 {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for row in 0..4 {
                    lo = lo.min(v.data()[row * 6 + col]);
                    hi = hi.max(v.data()[row * 6 + col]);
                }
                for row in 0..4 {
                    let val = t.data()[row * 6 + col];
                    assert!(val >= lo - 1e-9 && val <= hi + 1e-9, "case {i}: transfer hull");
                }
            }
        }
    }

    println!(
        "ACCEPTANCE 2 (normalization/convexity): PASS — {cases} randomized cases per family, zero failures"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: reference sampling oracle
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_sampling_oracle() {
    let _guard = lock();
    let t0 = Instant::now();
    let mut checked = 0u64;
    for l in 1..=1000usize {
        for n in 1..=l {
            let got = sample_reference_indices(l, n).unwrap();
            // direct floor-arithmetic evaluation
            if n == 1 {
                assert_eq!(got, vec![0], "L={l} N=1");
            } else {
                for (i, &idx) in got.iter().enumerate() {
                    assert_eq!(idx, i * (l - 1) / (n - 1), "L={l} N={n} i={i}");
                }
                assert_eq!(got[0], 0, "L={l} N={n}: first index");
                assert_eq!(*got.last().unwrap(), l - 1, "L={l} N={n}: last index");
            }
            for w in got.windows(2) {
                assert!(w[0] <= w[1], "L={l} N={n}: not nondecreasing");
            }
            checked += 1;
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "sampling oracle took {elapsed:.1}s, budget 60s");
    println!(
        "ACCEPTANCE 3 (reference sampling oracle): PASS — {checked} (L,N) pairs exhaustive, {elapsed:.1}s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: metric oracles
// ---------------------------------------------------------------------------

fn random_mask(r: &mut impl Rng, h: usize, w: usize) -> Mask {
    let mut m = Mask::empty(h, w);
    let fill = r.random_range(0.0..0.8);
    for y in 0..h {
        for x in 0..w {
            if r.random_range(0.0..1.0) < fill {
                m.set(y, x, 1);
            }
        }
    }
    m
}

#[test]
fn acceptance_4_metric_oracles() {
    let _guard = lock();

    // J against a pixel-count oracle, exact
    for i in 0..10_000u64 {
        let mut r = rng(40_000 + i);
        let h = r.random_range(1..=32);
        let w = r.random_range(1..=32);
        let a = random_mask(&mut r, h, w);
        let b = random_mask(&mut r, h, w);
        let got = region_similarity(&a, &b).unwrap();
        let mut inter = 0u32;
        let mut union = 0u32;
        for (p, g) in a.data().iter().zip(b.data()) {
            inter += (*p != 0 && *g != 0) as u32;
            union += (*p != 0 || *g != 0) as u32;
        }
        let want = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        assert_eq!(got, want, "case {i}: J mismatch");
    }

    // F against the all-pairs matching oracle, exact
    for i in 0..1_000u64 {
        let mut r = rng(50_000 + i);
        let h = r.random_range(1..=32);
        let w = r.random_range(1..=32);
        let a = random_mask(&mut r, h, w);
        let b = random_mask(&mut r, h, w);
        let got = boundary_accuracy(&a, &b).unwrap();

        let boundary = |m: &Mask| -> Vec<(usize, usize)> {
            let mut out = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if m.get(y, x) == 0 {
                        continue;
                    }
                    let edge = y == 0 || y == h - 1 || x == 0 || x == w - 1;
                    let bg = (y > 0 && m.get(y - 1, x) == 0)
                        || (y + 1 < h && m.get(y + 1, x) == 0)
                        || (x > 0 && m.get(y, x - 1) == 0)
                        || (x + 1 < w && m.get(y, x + 1) == 0);
                    if edge || bg {
                        out.push((y, x));
                    }
                }
            }
            out
        };
        let bp = boundary(&a);
        let bg = boundary(&b);
        let want = match (bp.is_empty(), bg.is_empty()) {
            (true, true) => 1.0,
            (true, false) | (false, true) => 0.0,
            _ => {
                let r_tol = boundary_tolerance(h, w);
                let r2 = (r_tol * r_tol) as isize;
                let close = |p: (usize, usize), q: (usize, usize)| {
                    let dy = p.0 as isize - q.0 as isize;
                    let dx = p.1 as isize - q.1 as isize;
                    dy * dy + dx * dx <= r2
                };
                let mp = bp.iter().filter(|p| bg.iter().any(|q| close(**p, *q))).count();
                let mg = bg.iter().filter(|q| bp.iter().any(|p| close(*p, **q))).count();
                let precision = mp as f64 / bp.len() as f64;
                let recall = mg as f64 / bg.len() as f64;
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            }
        };
        assert_eq!(got, want, "case {i}: F mismatch");
    }

    // G = (J+F)/2 through the report
    let mut r = rng(60_000);
    let seqs: Vec<(String, Vec<Mask>, Vec<Mask>)> = (0..4)
        .map(|i| {
            let pred: Vec<Mask> = (0..3).map(|_| random_mask(&mut r, 16, 16)).collect();
            let gt: Vec<Mask> = (0..3).map(|_| random_mask(&mut r, 16, 16)).collect();
            (format!("s{i}"), pred, gt)
        })
        .collect();
    let report = evaluate(&seqs).unwrap();
    for s in &report.per_sequence {
        assert!((s.g - 0.5 * (s.j + s.f)).abs() < 1e-12);
    }
    assert!((report.global.g - 0.5 * (report.global.j + report.global.f)).abs() < 1e-12);

    println!(
        "ACCEPTANCE 4 (metric oracles): PASS — J exact on 10000 pairs, F exact on 1000 pairs, G = (J+F)/2 within 1e-12"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: ablation direction (the long one; knobs below)
// ---------------------------------------------------------------------------

const ABLATION_STEPS: usize = 240;
const ABLATION_LR_MAX: f64 = 1e-3;
const ABLATION_LR_MIN: f64 = 1e-4;

#[test]
fn acceptance_5_ablation_direction() {
    let _guard = lock();
    let t0 = Instant::now();

    let train_videos = gen_synthetic(&GenConfig {
        seed: 4101,
        n_videos: 50,
        len: 16,
        height: 64,
        width: 64,
        difficulty: 1.0,
    })
    .unwrap();
    let test_videos = gen_synthetic(&GenConfig {
        seed: 4202,
        n_videos: 10,
        len: 16,
        height: 64,
        width: 64,
        difficulty: 1.0,
    })
    .unwrap();

    let cells: Vec<_> = standard_grid().into_iter().take(4).collect();
    let opts = AblationOptions {
        seeds: vec![0, 1, 2],
        steps: ABLATION_STEPS,
        batch_size: 1,
        lr_max: ABLATION_LR_MAX,
        lr_min: ABLATION_LR_MIN,
    };
    let rows = run_ablation(&train_videos, &test_videos, &cells, &opts).unwrap();
    let g: Vec<f64> = rows.iter().map(|r| r.g).collect();
    let elapsed = t0.elapsed().as_secs_f64();
    for row in &rows {
        eprintln!(
            "ablation row {:>3}: G={:.4} (per seed: {:?})",
            row.cell.label,
            row.g,
            row.per_seed.iter().map(|s| (s.seed, (s.g * 1e4).round() / 1e4)).collect::<Vec<_>>()
        );
    }

    assert!(
        g[3] > g[0],
        "mean G with both blocks ({:.4}) must exceed baseline ({:.4})",
        g[3],
        g[0]
    );
    assert!(
        g[1] > g[0],
        "mean G with cross-modal attention only ({:.4}) must exceed baseline ({:.4})",
        g[1],
        g[0]
    );
    assert!(
        g[2] > g[0],
        "mean G with temporal attention only ({:.4}) must exceed baseline ({:.4})",
        g[2],
        g[0]
    );
    println!(
        "ACCEPTANCE 5 (ablation direction): PASS — G: baseline {:.4}, +cross-modal {:.4}, +temporal {:.4}, both {:.4}; 3 seeds, {:.0}s",
        g[0], g[1], g[2], g[3], elapsed
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: cost accounting direction
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_cost_direction() {
    let _guard = lock();
    let count = |ima: bool, ifa: bool| {
        let mut cfg = ModelConfig::new(32, 32);
        cfg.use_ima = ima;
        cfg.use_ifa = ifa;
        DpaModel::new(cfg).unwrap().param_count()
    };
    let p1 = count(false, false);
    let p2 = count(true, false);
    let p3 = count(false, true);
    let p4 = count(true, true);
    assert!(p1 < p2, "baseline {p1} must be below +cross-modal {p2}");
    assert!(p1 < p3, "baseline {p1} must be below +temporal {p3}");
    assert!(p3 < p4, "+temporal {p3} must be below both {p4}");

    let mut cfg = ModelConfig::new(32, 32);
    cfg.seed = 13;
    let model = DpaModel::new(cfg).unwrap();
    let a = bench_model(&model, 4, 50).unwrap();
    let b = bench_model(&model, 4, 50).unwrap();
    assert_eq!(a.param_count, b.param_count, "parameter count must be bit-stable");
    assert_eq!(a.param_count, model.param_count());
    let cv = a.forward_cv();
    assert!(cv < 0.2, "timing CV {cv:.3} must stay below 0.20");
    println!(
        "ACCEPTANCE 6 (cost direction): PASS — params {p1} < {p2}, {p1} < {p3} < {p4}; timing CV {cv:.3} over {} repeats",
        a.repeats
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: determinism of gen-data and train
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_determinism() {
    let _guard = lock();
    let dir = tempfile::tempdir().unwrap();

    // gen-data through the CLI surface, twice
    let mut trees = Vec::new();
    for run_idx in 0..2 {
        let out = dir.path().join(format!("data{run_idx}"));
        let args: Vec<String> = [
            "gen-data",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "77",
            "--videos",
            "3",
            "--len",
            "8",
            "--height",
            "64",
            "--width",
            "64",
            "--difficulty",
            "1.0",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(dpat_core::cli::run(&args), 0);
        trees.push(data::dir_digest(&out).unwrap());
    }
    assert_eq!(trees[0].len(), trees[1].len());
    for ((p1, b1), (p2, b2)) in trees[0].iter().zip(&trees[1]) {
        assert_eq!(p1, p2);
        assert!(b1 == b2, "dataset file {} differs between runs", p1.display());
    }

    // train through the CLI surface, twice
    let mut checkpoints = Vec::new();
    for run_idx in 0..2 {
        let ckpt = dir.path().join(format!("model{run_idx}.dpat"));
        let args: Vec<String> = [
            "train",
            "--data",
            dir.path().join("data0").to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--steps",
            "5",
            "--seed",
            "3",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(dpat_core::cli::run(&args), 0);
        checkpoints.push(std::fs::read(&ckpt).unwrap());
    }
    assert!(
        checkpoints[0] == checkpoints[1],
        "checkpoints differ between seed-fixed runs"
    );
    println!(
        "ACCEPTANCE 7 (determinism): PASS — dataset trees and 5-step checkpoints byte-identical across runs"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: inference equivalence (read-only banks)
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_inference_equivalence() {
    let _guard = lock();
    let videos = gen_synthetic(&GenConfig {
        seed: 88,
        n_videos: 1,
        len: 8,
        height: 64,
        width: 64,
        difficulty: 1.0,
    })
    .unwrap();
    let video = &videos[0];
    let mut cfg = ModelConfig::new(64, 64);
    cfg.seed = 21;
    let model = DpaModel::new(cfg).unwrap();

    let full = infer_video(&model, video, 3).unwrap();

    // process each frame singly against a freshly built (identical) bank
    for (t, frame_mask) in full.iter().enumerate() {
        let banks: Banks = dpat_core::network::build_video_banks(&model, video, 3).unwrap();
        let logits = model
            .forward_frame(&video.frames[t], &video.flows[t], &banks)
            .unwrap();
        let single = dpat_core::network::logits_to_mask(&logits);
        assert_eq!(
            single.data(),
            frame_mask.data(),
            "frame {t}: single-frame result differs from whole-video pass"
        );
    }
    println!(
        "ACCEPTANCE 8 (inference equivalence): PASS — 8 frames identical processed singly vs in one pass"
    );
}
