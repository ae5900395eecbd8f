//! Independent oracles and the acceptance checks, shared by the integration
//! test targets.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stfusion::dataset::{clip_to_bytes, generate_clip, DatasetConfig, NUM_CLASSES};
use stfusion::eval::{run_all, RunConfig, Strategy, StrategyResult};
use stfusion::flow::{
    build_flow_stack, estimate_flow, gaussian_blur, FlowField, FlowNormalization, FlowParams, FlowStack, GrayImage,
};
use stfusion::fusion::{
    deinterleave, interleave_features, l2_normalize, late_fuse, train_linear_svm, ClassPriors, FusedFeature,
    SvmHyper, SvmModel,
};
use stfusion::scores::ScoreVector;
use stfusion::streams::{
    build_stream, channel_means, compute_clip_flows, ClipSamples, SampleSource, StreamConfig, StreamFeature,
    StreamInputs, StreamKind, StreamModel,
};
use stfusion::tensor::{
    conv3x3_forward, dense_forward, finite_difference_check, maxpool2x2, Layer, LayerParams, Network, Objective,
    Tensor,
};
use stfusion::Error;

/// Result of one acceptance criterion.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::random_uniform(dims, -1.0, 1.0, rng)
}

pub fn random_params(wdims: &[usize], out: usize, rng: &mut ChaCha8Rng) -> LayerParams<f64> {
    LayerParams::new(random_tensor(wdims, rng), random_tensor(&[out], rng))
}

/// Uniform weights with unit output variance per unit input variance, so
/// composed chains keep logits of order one.
pub fn fan_in_params(wdims: &[usize], out: usize, rng: &mut ChaCha8Rng) -> LayerParams<f64> {
    let fan_in: usize = wdims[..wdims.len() - 1].iter().product();
    let scale = (3.0 / fan_in as f64).sqrt();
    LayerParams::new(Tensor::random_uniform(wdims, -scale, scale, rng), random_tensor(&[out], rng))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Brute-force layer oracles on plain nested vectors.

/// Direct 3×3 correlation with zero padding 1. `x[i][j][c]`, `w[ki][kj][ci][co]`.
pub fn conv_oracle(x: &[Vec<Vec<f64>>], w: &[Vec<Vec<Vec<f64>>>], b: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let (h, wd) = (x.len(), x[0].len());
    let (cin, cout) = (x[0][0].len(), b.len());
    let mut out = vec![vec![vec![0.0; cout]; wd]; h];
    for i in 0..h {
        for j in 0..wd {
            for co in 0..cout {
                let mut acc = b[co];
                for ki in 0..3 {
                    for kj in 0..3 {
                        let (ii, jj) = (i as isize + ki as isize - 1, j as isize + kj as isize - 1);
                        if ii < 0 || jj < 0 || ii >= h as isize || jj >= wd as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            acc += w[ki][kj][ci][co] * x[ii as usize][jj as usize][ci];
                        }
                    }
                }
                out[i][j][co] = acc;
            }
        }
    }
    out
}

/// Windowed 2×2 max with stride 2, trailing odd row/column dropped.
pub fn pool_oracle(x: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let (h, w, c) = (x.len(), x[0].len(), x[0][0].len());
    (0..h / 2)
        .map(|i| {
            (0..w / 2)
                .map(|j| {
                    (0..c)
                        .map(|ch| {
                            let cells = [
                                x[2 * i][2 * j][ch],
                                x[2 * i][2 * j + 1][ch],
                                x[2 * i + 1][2 * j][ch],
                                x[2 * i + 1][2 * j + 1][ch],
                            ];
                            cells.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `out[o] = b[o] + Σ_i w[i][o] x[i]`.
pub fn dense_oracle(x: &[f64], w: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|o| b[o] + (0..x.len()).map(|i| w[i][o] * x[i]).sum::<f64>())
        .collect()
}

pub fn to_hwc(t: &Tensor<f64>) -> Vec<Vec<Vec<f64>>> {
    let d = t.dims();
    (0..d[0])
        .map(|i| (0..d[1]).map(|j| (0..d[2]).map(|c| t.at3(i, j, c)).collect()).collect())
        .collect()
}

pub fn flat3(v: &[Vec<Vec<f64>>]) -> Vec<f64> {
    v.iter().flatten().flatten().copied().collect()
}

pub fn conv_weights(t: &Tensor<f64>) -> Vec<Vec<Vec<Vec<f64>>>> {
    let d = t.dims();
    let (cin, cout) = (d[2], d[3]);
    (0..3)
        .map(|ki| {
            (0..3)
                .map(|kj| {
                    (0..cin)
                        .map(|ci| (0..cout).map(|co| t.data()[((ki * 3 + kj) * cin + ci) * cout + co]).collect())
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn dense_weights(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    let (din, dout) = (t.dims()[0], t.dims()[1]);
    (0..din).map(|i| t.data()[i * dout..(i + 1) * dout].to_vec()).collect()
}

// ---------------------------------------------------------------------------
// Gradient checks.

/// Named finite-difference errors for each layer type alone, a small chain
/// and desk-topology streams of every kind on 8×8 inputs.
pub fn gradient_errors() -> Vec<(String, f64)> {
    let mut r = rng(101);
    let mut out = Vec::new();
    let mut check = |name: &str, net: Network<f64>, input: Tensor<f64>, obj: Objective| {
        let rep = finite_difference_check(&net, &input, &obj, 1e-5).expect("gradient check runs");
        out.push((name.to_string(), rep.max_error()));
    };

    let conv = Network::new(vec![5, 5, 3], vec![Layer::Conv3x3(random_params(&[3, 3, 3, 4], 4, &mut r))]).unwrap();
    let proj = random_tensor(&[5, 5, 4], &mut r);
    check("conv3x3", conv, random_tensor(&[5, 5, 3], &mut r), Objective::Projection(proj));

    let pool = Network::new(vec![6, 6, 2], vec![Layer::MaxPool2x2]).unwrap();
    let proj = random_tensor(&[3, 3, 2], &mut r);
    check("maxpool2x2", pool, random_tensor(&[6, 6, 2], &mut r), Objective::Projection(proj));

    let relu = Network::new(vec![12], vec![Layer::Relu]).unwrap();
    let proj = random_tensor(&[12], &mut r);
    check("relu", relu, random_tensor(&[12], &mut r), Objective::Projection(proj));

    let dense = Network::new(vec![8], vec![Layer::Dense(random_params(&[8, 4], 4, &mut r))]).unwrap();
    let proj = random_tensor(&[4], &mut r);
    check("dense", dense, random_tensor(&[8], &mut r), Objective::Projection(proj));

    let head = Network::new(vec![7], vec![Layer::Dense(random_params(&[7, 6], 6, &mut r))]).unwrap();
    check("softmax cross-entropy", head, random_tensor(&[7], &mut r), Objective::CrossEntropy(2));

    let chain = Network::new(
        vec![8, 8, 2],
        vec![
            Layer::Conv3x3(fan_in_params(&[3, 3, 2, 3], 3, &mut r)),
            Layer::Relu,
            Layer::MaxPool2x2,
            Layer::Dense(fan_in_params(&[48, 6], 6, &mut r)),
        ],
    )
    .unwrap();
    check("conv-relu-pool-dense chain", chain, random_tensor(&[8, 8, 2], &mut r), Objective::CrossEntropy(4));

    for (i, kind) in [StreamKind::Spatial, StreamKind::Temporal, StreamKind::Early].into_iter().enumerate() {
        let cfg = StreamConfig::desk(kind, 2, 8, 8);
        let model = build_stream::<f64>(&cfg, 7 + i as u64).unwrap();
        let input = random_tensor(&[8, 8, cfg.input_dims.2], &mut r);
        check(&format!("desk {kind} stream"), model.network().clone(), input, Objective::CrossEntropy(i + 1));
    }
    out
}

pub fn criterion1() -> Outcome {
    let errs = gradient_errors();
    let worst = errs.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let pass = errs.iter().all(|(_, e)| *e < 1e-4);
    Outcome::new(pass, format!("{} cases, worst {} at {:.2e} (limit 1e-4)", errs.len(), worst.0, worst.1))
}

// ---------------------------------------------------------------------------
// Layer oracle equivalence.

/// Runs `n` random instances of each of conv, pool and dense against the
/// brute-force oracles. Returns the largest absolute deviation.
pub fn oracle_deviation(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (h, w) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let (cin, cout) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let x = random_tensor(&[h, w, cin], &mut r);
        let p = random_params(&[3, 3, cin, cout], cout, &mut r);
        let got = conv3x3_forward(&x, &p).unwrap();
        let want = conv_oracle(&to_hwc(&x), &conv_weights(&p.weights), p.biases.data());
        worst = worst.max(max_abs_diff(got.data(), &flat3(&want)));

        let (h, w, c) = (r.gen_range(2..=7), r.gen_range(2..=7), r.gen_range(1..=3));
        let x = random_tensor(&[h, w, c], &mut r);
        let (got, _) = maxpool2x2(&x).unwrap();
        worst = worst.max(max_abs_diff(got.data(), &flat3(&pool_oracle(&to_hwc(&x)))));

        let (din, dout) = (r.gen_range(1..=10), r.gen_range(1..=6));
        let x = random_tensor(&[din], &mut r);
        let p = random_params(&[din, dout], dout, &mut r);
        let got = dense_forward(&x, &p).unwrap();
        worst = worst.max(max_abs_diff(got.data(), &dense_oracle(x.data(), &dense_weights(&p.weights), p.biases.data())));
    }
    worst
}

pub fn criterion2() -> Outcome {
    let n = 120;
    let dev = oracle_deviation(n, 202);
    Outcome::new(dev <= 1e-12, format!("{n} instances per layer, max deviation {dev:.2e} (limit 1e-12)"))
}

// ---------------------------------------------------------------------------
// Optical flow.

pub const FLOW_BORDER: usize = 4;

/// Smooth random texture on a canvas with `margin` extra pixels per side,
/// normalized to [0, 1].
pub fn canvas(size: usize, margin: usize, seed: u64) -> GrayImage<f64> {
    let n = size + 2 * margin;
    let mut r = rng(seed);
    let noise = GrayImage::from_fn(n, n, |_, _| r.gen_range(0.0..1.0));
    let img = gaussian_blur(&noise, 1.5);
    let (lo, hi) = img.data().iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
    img.map(|x| (x - lo) / (hi - lo))
}

/// Crops a `size×size` window whose top-left corner is `margin - (dy, dx)`,
/// so the content appears moved by `(dx, dy)` relative to the centered crop.
pub fn crop(c: &GrayImage<f64>, size: usize, margin: usize, dx: isize, dy: isize) -> GrayImage<f64> {
    GrayImage::from_fn(size, size, |i, j| {
        c.at((i as isize + margin as isize - dy) as usize, (j as isize + margin as isize - dx) as usize)
    })
}

/// Exhaustive integer block matching over ±`radius`: for each 9×9 block of
/// `a`, the displacement minimizing SSD in `b`. Returns the mean displacement.
pub fn block_matching(a: &GrayImage<f64>, b: &GrayImage<f64>, radius: isize) -> (f64, f64) {
    let (h, w) = a.dims();
    let half = 4isize;
    let lo = half + radius;
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
    let mut ci = lo;
    while ci < h as isize - lo {
        let mut cj = lo;
        while cj < w as isize - lo {
            let mut best = (f64::MAX, 0, 0);
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let mut ssd = 0.0;
                    for y in -half..=half {
                        for x in -half..=half {
                            let d = a.at((ci + y) as usize, (cj + x) as usize)
                                - b.at((ci + y + dy) as usize, (cj + x + dx) as usize);
                            ssd += d * d;
                        }
                    }
                    if ssd < best.0 {
                        best = (ssd, dx, dy);
                    }
                }
            }
            su += best.1 as f64;
            sv += best.2 as f64;
            n += 1.0;
            cj += 4;
        }
        ci += 4;
    }
    (su / n, sv / n)
}

/// Every integer shift with `dx² + dy² <= 9`, zero excluded.
pub fn shifts_within_three() -> Vec<(isize, isize)> {
    let mut v = Vec::new();
    for dy in -3isize..=3 {
        for dx in -3isize..=3 {
            if (dx, dy) != (0, 0) && dx * dx + dy * dy <= 9 {
                v.push((dx, dy));
            }
        }
    }
    v
}

pub fn criterion3() -> Outcome {
    let params = FlowParams::default();
    let mut worst_aee = 0.0f64;
    let mut oracle_ok = true;
    let shifts = shifts_within_three();
    for (k, &(dx, dy)) in shifts.iter().enumerate() {
        let c = canvas(64, 6, 300 + k as u64);
        let a = crop(&c, 64, 6, 0, 0);
        let b = crop(&c, 64, 6, dx, dy);
        oracle_ok &= block_matching(&a, &b, 4) == (dx as f64, dy as f64);
        let f = estimate_flow(&a, &b, &params).unwrap();
        worst_aee = worst_aee.max(f.endpoint_error(&FlowField::constant(64, 64, dx as f64, dy as f64), FLOW_BORDER));
    }
    let mut worst_still = 0.0f64;
    for seed in 0..3 {
        let c = canvas(64, 0, 400 + seed);
        let (mu, mv) = estimate_flow(&c, &c, &params).unwrap().mean_abs();
        worst_still = worst_still.max(mu).max(mv);
    }
    Outcome::new(
        oracle_ok && worst_aee < 0.5 && worst_still < 0.05,
        format!(
            "{} shifts, block-matching oracle {}, worst interior AEE {worst_aee:.3} px (limit 0.5), identical frames mean |flow| {worst_still:.4} px (limit 0.05)",
            shifts.len(),
            if oracle_ok { "agrees" } else { "DISAGREES" }
        ),
    )
}

// ---------------------------------------------------------------------------
// Flow stacking.

pub fn random_flows(l: usize, h: usize, w: usize, r: &mut ChaCha8Rng) -> Vec<FlowField<f64>> {
    (0..l)
        .map(|_| {
            let u = (0..h * w).map(|_| r.gen_range(-5.0..5.0)).collect();
            let v = (0..h * w).map(|_| r.gen_range(-5.0..5.0)).collect();
            FlowField::new(h, w, u, v).unwrap()
        })
        .collect()
}

/// Checks that 1-based channel `2k-1` / `2k` of the stack holds `u` / `v` of
/// flow `k`, reading the raw interleaved buffer.
pub fn stack_matches(stack: &FlowStack<f64>, flows: &[FlowField<f64>]) -> bool {
    let ch = 2 * flows.len();
    if stack.channels() != ch || stack.length() != flows.len() {
        return false;
    }
    let data = stack.data().data();
    flows.iter().enumerate().all(|(k0, f)| {
        let k = k0 + 1;
        (0..f.u().len()).all(|p| data[p * ch + 2 * k - 2] == f.u()[p] && data[p * ch + 2 * k - 1] == f.v()[p])
    })
}

pub fn criterion4() -> Outcome {
    let mut r = rng(404);
    let mut trials = 0;
    let mut ok = true;
    for l in 1..=12 {
        for _ in 0..4 {
            let (h, w) = (r.gen_range(1..=9), r.gen_range(1..=9));
            let flows = random_flows(l, h, w, &mut r);
            let stack = build_flow_stack(&flows, r.gen_range(0..20)).unwrap();
            ok &= stack_matches(&stack, &flows);
            trials += 1;
        }
    }
    Outcome::new(ok, format!("{trials} random stacks, L in 1..=12"))
}

// ---------------------------------------------------------------------------
// Fusion algebra.

pub fn feature(values: Vec<f64>, source: StreamKind) -> StreamFeature<f64> {
    StreamFeature { values, source }
}

pub fn random_scores(n: usize, r: &mut ChaCha8Rng) -> ScoreVector<f64> {
    let raw: Vec<f64> = (0..n).map(|_| r.gen_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    ScoreVector::new(raw.into_iter().map(|x| x / s).collect(), 1e-9).unwrap()
}

pub fn random_priors(n: usize, r: &mut ChaCha8Rng) -> ClassPriors {
    let raw: Vec<f64> = (0..n).map(|_| r.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    ClassPriors::new(raw.into_iter().map(|x| x / s).collect()).unwrap()
}

pub fn scores(v: &[f64]) -> ScoreVector<f64> {
    ScoreVector::new(v.to_vec(), 1e-9).unwrap()
}

/// Violations found over seeded random trials of every fusion identity.
pub fn fusion_violations(trials: usize, seed: u64) -> Vec<String> {
    let mut r = rng(seed);
    let mut bad = Vec::new();

    let fused = late_fuse(&scores(&[0.7, 0.3]), &scores(&[0.6, 0.4]), &ClassPriors::uniform(2)).unwrap();
    if max_abs_diff(fused.as_slice(), &[7.0 / 9.0, 2.0 / 9.0]) > 1e-9 {
        bad.push(format!("uniform-prior case gave {:?}", fused.as_slice()));
    }
    let fused = late_fuse(&scores(&[0.7, 0.3]), &scores(&[0.6, 0.4]), &ClassPriors::new(vec![0.9, 0.1]).unwrap()).unwrap();
    if max_abs_diff(fused.as_slice(), &[0.28, 0.72]) > 1e-9 {
        bad.push(format!("skewed-prior case gave {:?}", fused.as_slice()));
    }
    let mut v = vec![0.0; 8];
    v[0] = 3.0;
    v[1] = 4.0;
    let n = l2_normalize(&FusedFeature { values: v, normalized: false });
    let mut want = vec![0.0; 8];
    want[0] = 0.6;
    want[1] = 0.8;
    if max_abs_diff(&n.values, &want) > 1e-15 || !n.normalized {
        bad.push(format!("3-4-5 case gave {:?}", n.values));
    }

    for t in 0..trials {
        let d = r.gen_range(1..=40);
        let a: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
        let f = interleave_features(&feature(a.clone(), StreamKind::Spatial), &feature(b.clone(), StreamKind::Temporal)).unwrap();
        if deinterleave(&f.values).unwrap() != (a.clone(), b.clone()) || f.values.len() != 2 * d {
            bad.push(format!("trial {t}: interleave is not a bijection"));
        }
        if (0..d).any(|i| f.values[2 * i] != a[i] || f.values[2 * i + 1] != b[i]) {
            bad.push(format!("trial {t}: interleave index map"));
        }
        let c = r.gen_range(1e-3..1e3);
        let scaled = FusedFeature {
            values: f.values.iter().map(|x| x * c).collect(),
            normalized: false,
        };
        let (n1, n2) = (l2_normalize(&f), l2_normalize(&scaled));
        if max_abs_diff(&n1.values, &n2.values) > 1e-12 {
            bad.push(format!("trial {t}: normalization not homogeneous"));
        }
        let norm = n1.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            bad.push(format!("trial {t}: normalized norm {norm}"));
        }

        let k = r.gen_range(2..=8);
        let (s, q, p) = (random_scores(k, &mut r), random_scores(k, &mut r), random_priors(k, &mut r));
        let ab = late_fuse(&s, &q, &p).unwrap();
        let ba = late_fuse(&q, &s, &p).unwrap();
        if (ab.as_slice().iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            bad.push(format!("trial {t}: fused scores do not sum to 1"));
        }
        if max_abs_diff(ab.as_slice(), ba.as_slice()) > 1e-15 {
            bad.push(format!("trial {t}: late fusion not symmetric"));
        }
        let uni = late_fuse(&s, &ScoreVector::uniform(k), &ClassPriors::uniform(k)).unwrap();
        if max_abs_diff(uni.as_slice(), s.as_slice()) > 1e-15 {
            bad.push(format!("trial {t}: uniform stream does not cancel"));
        }
        let j = r.gen_range(0..k);
        let mut lowered = p.as_slice().to_vec();
        lowered[j] *= r.gen_range(0.1..0.9);
        let rest: f64 = (0..k).filter(|&i| i != j).map(|i| lowered[i]).sum();
        let scale = (1.0 - lowered[j]) / rest;
        (0..k).filter(|&i| i != j).for_each(|i| lowered[i] *= scale);
        let moved = late_fuse(&s, &q, &ClassPriors::new(lowered).unwrap()).unwrap();
        if moved.as_slice()[j] <= ab.as_slice()[j] {
            bad.push(format!("trial {t}: lowering prior {j} did not raise its score"));
        }
    }
    bad
}

pub fn criterion5() -> Outcome {
    let trials = 500;
    let bad = fusion_violations(trials, 505);
    let detail = if bad.is_empty() {
        format!("2 numeric late-fusion cases, 3-4-5 case and {trials} random trials of each identity")
    } else {
        format!("{} violations, first: {}", bad.len(), bad[0])
    };
    Outcome::new(bad.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// Overfit capacity.

/// Two clips per class, rendered and with flows, as in the default dataset.
pub fn overfit_inputs(cfg: &RunConfig) -> StreamInputs {
    let mut data = cfg.dataset.clone();
    data.class_counts = vec![2; NUM_CLASSES];
    let clips = (0..NUM_CLASSES)
        .flat_map(|c| (0..2).map(move |i| (c, i)))
        .map(|(c, i)| {
            let clip = generate_clip(&data.clip_spec(c, i)).unwrap();
            let flows = compute_clip_flows(&clip, &cfg.flow).unwrap();
            ClipSamples { clip, flows: Some(flows) }
        })
        .collect();
    StreamInputs::new(clips, cfg.flow_len, cfg.flow_norm.clone()).unwrap()
}

/// Best per-epoch training accuracy within 200 epochs, stopping at 0.95.
pub fn overfit_accuracy(cfg: &RunConfig, inputs: &StreamInputs, kind: StreamKind) -> (f64, usize) {
    let view = inputs.view(kind);
    let clips: Vec<usize> = (0..view.num_clips()).collect();
    let sc = cfg.stream_config(kind);
    let mut model: StreamModel<f32> = build_stream(&sc, 1).unwrap();
    if kind != StreamKind::Temporal {
        let means = channel_means(&inputs.view(StreamKind::Spatial), &clips, 3).unwrap();
        let mut offsets = vec![0f32; sc.input_dims.2];
        for (o, m) in offsets.iter_mut().zip(means) {
            *o = m as f32;
        }
        model.set_channel_offsets(offsets).unwrap();
    }
    let mut hyper = cfg.train.clone();
    hyper.epochs = 200;
    hyper.stop_at_accuracy = Some(0.95);
    let history = stfusion::streams::train_stream(&mut model, &view, &clips, &hyper).unwrap();
    let best = history.iter().map(|h| h.train_accuracy).fold(0.0, f64::max);
    (best, history.len())
}

pub fn criterion6() -> Outcome {
    let cfg = RunConfig::default();
    let inputs = overfit_inputs(&cfg);
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [StreamKind::Spatial, StreamKind::Temporal] {
        let (acc, epochs) = overfit_accuracy(&cfg, &inputs, kind);
        pass &= acc >= 0.95;
        parts.push(format!("{kind} {acc:.3} after {epochs} epochs"));
    }
    Outcome::new(pass, format!("{} (limit 0.95 within 200)", parts.join(", ")))
}

// ---------------------------------------------------------------------------
// Strategy ordering and determinism on the default dataset.

pub const ORDERING_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

pub fn acceptance_config(root: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.cache = Some(root.join("cache"));
    cfg.out = root.join(format!("seed{seed}"));
    cfg
}

pub fn total(results: &[StrategyResult], s: Strategy) -> f64 {
    results.iter().find(|r| r.strategy == s).expect("strategy evaluated").report.total_accuracy()
}

/// Whether one seed's results satisfy the ordering, with a summary line.
pub fn ordering_holds(results: &[StrategyResult]) -> (bool, String) {
    let (sp, tp) = (total(results, Strategy::SpatialOnly), total(results, Strategy::TemporalOnly));
    let (mid, late) = (total(results, Strategy::Mid), total(results, Strategy::Late));
    let best = sp.max(tp);
    let ok = sp <= 0.65 && tp <= 0.75 && mid >= best + 0.10 && late >= best + 0.10 && mid >= 0.85;
    (
        ok,
        format!("spatial {sp:.3} temporal {tp:.3} early {:.3} mid {mid:.3} late {late:.3}", total(results, Strategy::Early)),
    )
}

pub fn criterion7(root: &Path) -> Outcome {
    let mut held = 0;
    let mut lines = Vec::new();
    for seed in ORDERING_SEEDS {
        let results = run_all(acceptance_config(root, seed)).unwrap();
        let (ok, line) = ordering_holds(&results);
        held += usize::from(ok);
        lines.push(format!("seed {seed}: {line} [{}]", if ok { "holds" } else { "fails" }));
    }
    Outcome::new(held >= 4, format!("ordering holds on {held}/5 seeds (need 4)\n    {}", lines.join("\n    ")))
}

pub const REPORT_FILES: [&str; 3] = ["report.csv", "report_ratios.csv", "confusion.csv"];

/// Every report CSV under `out`, relative path and bytes, sorted.
pub fn report_csvs(out: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    for name in ["comparison.csv", "comparison_ratios.csv"] {
        files.push(PathBuf::from(name));
    }
    for s in Strategy::ALL {
        for f in REPORT_FILES {
            files.push(Path::new(s.as_str()).join(f));
        }
    }
    files
        .into_iter()
        .map(|p| {
            let bytes = fs::read(out.join(&p)).unwrap_or_default();
            (p, bytes)
        })
        .collect()
}

/// Copies the dataset and flow caches of `from` into a fresh cache `to`, so
/// a second run retrains every stream from scratch.
pub fn copy_input_caches(from: &Path, to: &Path) {
    for stage in ["data", "flow"] {
        copy_dir(&from.join(stage), &to.join(stage));
    }
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            fs::copy(e.path(), target).unwrap();
        }
    }
}

/// Runs `cfg` twice, the second time with a separate stream cache, and
/// compares every report CSV byte for byte.
pub fn determinism(cfg: &RunConfig, root: &Path) -> Outcome {
    let first_out = cfg.out.clone();
    if !first_out.join("comparison.csv").is_file() {
        run_all(cfg.clone()).unwrap();
    }
    let mut second = cfg.clone();
    second.out = root.join("rerun");
    second.cache = Some(root.join("rerun-cache"));
    copy_input_caches(&cfg.cache_dir(), &root.join("rerun-cache"));
    run_all(second.clone()).unwrap();
    let (a, b) = (report_csvs(&first_out), report_csvs(&second.out));
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1.is_empty() || x.1 != y.1)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    Outcome::new(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} report CSVs byte-identical across two runs with separate stream caches", a.len())
        } else {
            format!("differing or missing: {}", differing.join(", "))
        },
    )
}

pub fn criterion8(root: &Path) -> Outcome {
    determinism(&acceptance_config(root, ORDERING_SEEDS[0]), root)
}

// ---------------------------------------------------------------------------
// File formats.

pub fn is_format_error<T: std::fmt::Debug>(r: &Result<T, Error>) -> bool {
    matches!(r, Err(Error::Format { .. }))
}

/// Byte-exact round trip, and rejection of a bad magic, a bad version, a
/// truncation and a trailing byte, for one encoder/decoder pair. The binary
/// header (8-byte magic, then the version) starts at `header_at`.
pub fn format_checks<T>(
    name: &str,
    bytes: Vec<u8>,
    header_at: usize,
    decode: impl Fn(&[u8]) -> Result<T, Error>,
    encode: impl Fn(&T) -> Vec<u8>,
) -> Vec<String>
where
    T: std::fmt::Debug,
{
    let mut bad = Vec::new();
    match decode(&bytes) {
        Ok(v) if encode(&v) == bytes => {}
        Ok(_) => bad.push(format!("{name}: re-encoding differs")),
        Err(e) => bad.push(format!("{name}: decode failed: {e}")),
    }
    let mut magic = bytes.clone();
    magic[header_at] ^= 0xff;
    if !is_format_error(&decode(&magic)) {
        bad.push(format!("{name}: bad magic accepted"));
    }
    let mut version = bytes.clone();
    version[header_at + 8] = version[header_at + 8].wrapping_add(7);
    if !is_format_error(&decode(&version)) {
        bad.push(format!("{name}: bad version accepted"));
    }
    for cut in [header_at + 4, header_at + 12, bytes.len() / 2, bytes.len() - 1] {
        if !is_format_error(&decode(&bytes[..cut])) {
            bad.push(format!("{name}: truncation to {cut} bytes accepted"));
        }
    }
    let mut longer = bytes.clone();
    longer.push(0);
    if !is_format_error(&decode(&longer)) {
        bad.push(format!("{name}: trailing byte accepted"));
    }
    bad
}

pub fn format_violations() -> Vec<String> {
    let mut r = rng(909);
    let mut bad = Vec::new();

    let data = DatasetConfig::default();
    let clip = generate_clip(&data.clip_spec(3, 0)).unwrap();
    bad.extend(format_checks("clip", clip_to_bytes(&clip), 0, stfusion::dataset::clip_from_bytes, clip_to_bytes));

    let flows: Vec<FlowField<f32>> = random_flows(4, 9, 7, &mut r).iter().map(|f| f.cast()).collect();
    let stack = build_flow_stack(&flows, 3).unwrap();
    bad.extend(format_checks("flow stack", stack.to_bytes(), 0, FlowStack::<f32>::from_bytes, FlowStack::to_bytes));

    let net = build_stream::<f32>(&StreamConfig::desk(StreamKind::Temporal, 2, 8, 8), 5).unwrap();
    bad.extend(format_checks(
        "network checkpoint",
        net.network().to_checkpoint(),
        0,
        Network::<f32>::from_checkpoint,
        Network::to_checkpoint,
    ));
    let stream_bytes = net.to_bytes();
    let body_at = stream_bytes.len() - net.network().to_checkpoint().len();
    bad.extend(format_checks("stream checkpoint", stream_bytes, body_at, StreamModel::<f32>::from_bytes, StreamModel::to_bytes));

    let feats: Vec<FusedFeature<f32>> = (0..12)
        .map(|_| {
            let v: Vec<f32> = (0..6).map(|_| r.gen_range(-1.0..1.0)).collect();
            l2_normalize(&FusedFeature { values: v, normalized: false })
        })
        .collect();
    let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let svm = train_linear_svm(&feats, &labels, 3, &SvmHyper::default()).unwrap();
    bad.extend(format_checks("svm", svm.to_bytes(), 0, SvmModel::<f32>::from_bytes, SvmModel::to_bytes));
    bad
}

pub fn criterion9() -> Outcome {
    let bad = format_violations();
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            "clip, flow stack, network and stream checkpoints, SVM: bit-exact, corrupt headers rejected".to_string()
        } else {
            bad.join("; ")
        },
    )
}

pub fn default_flow_norm() -> FlowNormalization {
    FlowNormalization::default()
}
