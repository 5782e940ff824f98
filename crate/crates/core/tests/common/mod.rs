//! Shared oracles and finite-difference machinery for the integration tests
//! and the acceptance report.
#![allow(dead_code)]

use mscnn::fusion::{fuse_backward, fuse_forward, FusionMode, FusionParameters};
use mscnn::model::Mscnn;
use mscnn::network::{
    branch_backward, branch_forward, init_parameters, Activation, DecoderVariant, FusionPoint, LayerKind,
    LayerSpec, NetworkConfig, PoolPlan,
};
use mscnn::tensor::*;
use mscnn::training::{compute_gradients, Batch, LossConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - b|| / max(||a||, ||b||)`; infinite when both vanish, so a dead
/// gradient never passes a check.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        return f64::INFINITY;
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / scale
}

/// Central differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let up = f(&xp);
            xp[i] = orig - h;
            let down = f(&xp);
            xp[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `sum(y * r)`, the probe objective for primitive checks.
pub fn probe(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn with_data(t: &Tensor<f64>, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(t.shape(), data.to_vec()).unwrap()
}

/// Step used for single primitives.
pub const H_PRIMITIVE: f64 = 1e-4;
/// Step used for whole networks.
pub const H_NETWORK: f64 = 1e-6;

/// Checks a conv (or transposed conv) layer: input, weight and bias
/// gradients against central differences.
fn check_conv(name: &str, spec: ConvSpec, shape: Shape, rng: &mut ChaCha8Rng, out: &mut Vec<(String, f64)>) {
    let x = random_tensor(shape, rng);
    let w = random_tensor(spec.weight_shape(), rng);
    let b: Vec<f64> = (0..spec.out_channels).map(|_| rng.random_range(-1.0..1.0)).collect();
    let fwd = |x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64]| {
        if spec.transposed {
            transposed_conv2d(x, w, b, &spec).unwrap()
        } else {
            conv2d(x, w, b, &spec).unwrap()
        }
    };
    let r = random_tensor(fwd(&x, &w, &b).shape(), rng);
    let g = if spec.transposed {
        transposed_conv2d_backward(&x, &w, &r, &spec).unwrap()
    } else {
        conv2d_backward(&x, &w, &r, &spec).unwrap()
    };
    let nx = numeric_grad(x.data(), H_PRIMITIVE, |d| probe(&fwd(&with_data(&x, d), &w, &b), &r));
    let nw = numeric_grad(w.data(), H_PRIMITIVE, |d| probe(&fwd(&x, &with_data(&w, d), &b), &r));
    let nb = numeric_grad(&b, H_PRIMITIVE, |d| probe(&fwd(&x, &w, d), &r));
    let analytic: Vec<f64> = [g.input.data(), g.weights.data(), &g.bias[..]].concat();
    let numeric = [nx, nw, nb].concat();
    out.push((name.to_string(), rel_error(&analytic, &numeric)));
}

/// Checks an operator with no parameters given its forward map and the
/// gradient it reports for the probe direction.
fn check_map(
    name: &str,
    x: &Tensor<f64>,
    forward: impl Fn(&Tensor<f64>) -> Tensor<f64>,
    backward: impl Fn(&Tensor<f64>) -> Tensor<f64>,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<(String, f64)>,
) {
    let r = random_tensor(forward(x).shape(), rng);
    let analytic = backward(&r);
    let numeric = numeric_grad(x.data(), H_PRIMITIVE, |d| probe(&forward(&with_data(x, d)), &r));
    out.push((name.to_string(), rel_error(analytic.data(), &numeric)));
}

/// Relative errors for every primitive's backward pass.
pub fn primitive_gradient_errors() -> Vec<(String, f64)> {
    let mut rng = rng(100);
    let mut out = Vec::new();
    let s = Shape::new(2, 3, 7, 6);
    check_conv("conv2d k3 s1 same", ConvSpec::conv(3, 4, 3, 1), s, &mut rng, &mut out);
    check_conv("conv2d k3 s2 same", ConvSpec::conv(3, 2, 3, 2), s, &mut rng, &mut out);
    check_conv("conv2d k5 s2 pad1", ConvSpec::conv(3, 2, 5, 2).with_padding(Padding::Explicit(1)), s, &mut rng, &mut out);
    check_conv("conv2d k1", ConvSpec::conv(3, 2, 1, 1), s, &mut rng, &mut out);
    check_conv("transposed k3 s1", ConvSpec::transposed(3, 2, 3, 1), s, &mut rng, &mut out);
    check_conv("transposed k3 s2", ConvSpec::transposed(3, 2, 3, 2), s, &mut rng, &mut out);
    check_conv(
        "transposed k2 s2 pad0",
        ConvSpec::transposed(3, 2, 2, 2).with_padding(Padding::Explicit(0)),
        s,
        &mut rng,
        &mut out,
    );
    check_conv("transposed k5 s1", ConvSpec::transposed(3, 2, 5, 1), Shape::new(1, 3, 5, 5), &mut rng, &mut out);

    let x = random_tensor(Shape::new(2, 3, 6, 8), &mut rng);
    let (_, sw) = maxpool2x2(&x).unwrap();
    check_map(
        "maxpool2x2",
        &x,
        |x| maxpool2x2(x).unwrap().0,
        |g| maxpool2x2_backward(g, &sw).unwrap(),
        &mut rng,
        &mut out,
    );
    let odd = random_tensor(Shape::new(1, 2, 7, 5), &mut rng);
    let opts = PoolOptions { pad_odd: true };
    let (_, sw_odd) = maxpool2x2_with(&odd, opts).unwrap();
    check_map(
        "maxpool2x2 padded",
        &odd,
        |x| maxpool2x2_with(x, opts).unwrap().0,
        |g| maxpool2x2_backward(g, &sw_odd).unwrap(),
        &mut rng,
        &mut out,
    );
    let pooled = random_tensor(sw.output_shape(), &mut rng);
    check_map(
        "unpool2x2",
        &pooled,
        |p| unpool2x2(p, &sw).unwrap(),
        |g| unpool2x2_backward(g, &sw).unwrap(),
        &mut rng,
        &mut out,
    );
    for window in [3, 5] {
        check_map(
            &format!("avgpool_same {window}"),
            &x,
            |x| avgpool_same(x, window).unwrap(),
            |g| avgpool_same_backward(g, window).unwrap(),
            &mut rng,
            &mut out,
        );
    }
    let y = relu(&x);
    check_map("relu", &x, relu, |g| relu_backward(&y, g).unwrap(), &mut rng, &mut out);
    let sg = sigmoid(&x);
    check_map("sigmoid", &x, sigmoid, |g| sigmoid_backward(&sg, g).unwrap(), &mut rng, &mut out);
    check_map(
        "upsample_nearest2x",
        &x,
        upsample_nearest2x,
        |g| upsample_nearest2x_backward(g).unwrap(),
        &mut rng,
        &mut out,
    );
    check_map("spread2x2", &x, spread2x2, |g| spread2x2_backward(g).unwrap(), &mut rng, &mut out);
    let other = random_tensor(x.shape(), &mut rng);
    check_map(
        "hadamard",
        &x,
        |a| hadamard(a, &other).unwrap(),
        |g| hadamard(g, &other).unwrap(),
        &mut rng,
        &mut out,
    );
    out
}

/// Relative error of every gradient of the fusion block.
pub fn fusion_gradient_error(mode: FusionMode) -> f64 {
    let mut rng = rng(200 + mode as u64);
    let c = 2;
    let shape = Shape::new(2, c, 6, 5);
    let cur = random_tensor(shape, &mut rng);
    let rf = random_tensor(shape, &mut rng);
    let mut params = FusionParameters::<f64>::zeros(c, 3, mode);
    params.gate_weights = random_tensor(params.gate_weights.shape(), &mut rng);
    params.gate_bias = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
    let r = random_tensor(shape, &mut rng);
    let (_, bundle) = fuse_forward(&cur, &rf, &params).unwrap();
    let g = fuse_backward(&bundle, &cur, &rf, &params, &r).unwrap();

    let eval = |cur: &Tensor<f64>, rf: &Tensor<f64>, p: &FusionParameters<f64>| {
        probe(&fuse_forward(cur, rf, p).unwrap().0, &r)
    };
    let n_cur = numeric_grad(cur.data(), H_PRIMITIVE, |d| eval(&with_data(&cur, d), &rf, &params));
    let n_ref = numeric_grad(rf.data(), H_PRIMITIVE, |d| eval(&cur, &with_data(&rf, d), &params));
    let n_w = numeric_grad(params.gate_weights.data(), H_PRIMITIVE, |d| {
        let mut p = params.clone();
        p.gate_weights = with_data(&params.gate_weights, d);
        eval(&cur, &rf, &p)
    });
    let n_b = numeric_grad(&params.gate_bias, H_PRIMITIVE, |d| {
        let mut p = params.clone();
        p.gate_bias = d.to_vec();
        eval(&cur, &rf, &p)
    });
    let analytic = [g.cur.data(), g.reference.data(), g.gate_weights.data(), &g.gate_bias[..]].concat();
    rel_error(&analytic, &[n_cur, n_ref, n_w, n_b].concat())
}

fn layer(kind: LayerKind, filters: usize, kernel: usize, stride: usize, activation: Activation) -> LayerSpec {
    LayerSpec {
        kind,
        filters,
        kernel,
        stride,
        activation,
    }
}

/// Seven-layer network for 32×32 inputs: one switch pool, a strided conv
/// and a strided transposed conv, with fewer channels after unpooling than
/// were pooled.
pub fn tiny_config(variant: DecoderVariant, point: FusionPoint, mode: FusionMode) -> NetworkConfig {
    use Activation::*;
    use LayerKind::*;
    let cfg = NetworkConfig {
        input_channels: 1,
        layers: vec![
            layer(Conv, 3, 3, 1, Relu),
            layer(Conv, 3, 3, 1, Relu),
            layer(Conv, 3, 3, 2, Relu),
            layer(Conv, 2, 1, 1, Relu),
            layer(TransposedConv, 3, 3, 2, Relu),
            layer(TransposedConv, 2, 3, 1, Relu),
            layer(Conv, 1, 1, 1, Identity),
        ],
        pool_plan: PoolPlan {
            pools_after: vec![0],
            unpools_before: vec![5],
            upsamples_before: vec![],
        },
        fusion_point: point,
        fusion_mode: mode,
        gate_pool_window: 3,
        decoder_variant: variant,
    };
    cfg.validate().expect("tiny config is valid");
    cfg
}

pub fn flatten(model: &mut Mscnn<f64>) -> Vec<f64> {
    let mut v = Vec::new();
    model
        .visit_params_mut(|_, s| {
            v.extend_from_slice(s);
            Ok(())
        })
        .unwrap();
    v
}

pub fn unflatten(model: &mut Mscnn<f64>, values: &[f64]) {
    let mut at = 0;
    model
        .visit_params_mut(|_, s| {
            s.copy_from_slice(&values[at..at + s.len()]);
            at += s.len();
            Ok(())
        })
        .unwrap();
}

/// Gradient error of the full training objective
/// `total_loss + weight_decay * ||θ||²` on a single 1×32×32 patch.
pub fn network_gradient_error(cfg: NetworkConfig, lambda1: f64, weight_decay: f64, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut model = Mscnn::<f64>::new(cfg, seed).unwrap();
    // Non-zero biases so every parameter matters.
    let theta: Vec<f64> = flatten(&mut model)
        .into_iter()
        .map(|v| v + rng.random_range(-0.1..0.1))
        .collect();
    unflatten(&mut model, &theta);
    let shape = Shape::new(1, 1, 32, 32);
    let gt = Tensor::from_fn(shape, |_, _, _, _| rng.random_range(0.0..1.0));
    let mut noisy = |t: &Tensor<f64>| Tensor::from_fn(shape, |n, c, y, x| t.get(n, c, y, x) + rng.random_range(-0.1..0.1));
    let batch = Batch {
        current: noisy(&gt),
        reference: noisy(&gt),
        ground_truth: gt,
    };
    let loss_cfg = LossConfig { lambda1 };
    let (_, grads) = compute_gradients(&model, &batch, &loss_cfg).unwrap();
    let analytic: Vec<f64> = grads
        .slices()
        .concat()
        .iter()
        .zip(&theta)
        .map(|(g, p)| g + 2.0 * weight_decay * p)
        .collect();
    let mut probe_model = model.clone();
    let numeric = numeric_grad(&theta, H_NETWORK, |d| {
        unflatten(&mut probe_model, d);
        let (loss, _) = compute_gradients(&probe_model, &batch, &loss_cfg).unwrap();
        loss.total + weight_decay * d.iter().map(|v| v * v).sum::<f64>()
    });
    rel_error(&analytic, &numeric)
}

/// Gradient error of a single branch with respect to its parameters and
/// its input patch.
pub fn branch_gradient_error(cfg: &NetworkConfig, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut params = init_parameters::<f64>(cfg, seed);
    for l in &mut params.layers {
        for b in &mut l.bias {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let x = Tensor::from_fn(Shape::new(2, 1, 32, 32), |_, _, _, _| rng.random_range(0.0..1.0));
    let acts = branch_forward(&params, cfg, &x).unwrap();
    let r = random_tensor(acts.output().shape(), &mut rng);
    let g = branch_backward(&params, cfg, &acts, &r).unwrap();
    let eval = |p: &mscnn::network::BranchParameters<f64>, x: &Tensor<f64>| {
        probe(branch_forward(p, cfg, x).unwrap().output(), &r)
    };
    let mut analytic = g.input.as_ref().unwrap().data().to_vec();
    let mut numeric = numeric_grad(x.data(), H_NETWORK, |d| eval(&params, &with_data(&x, d)));
    for (i, lg) in g.layers.iter().enumerate() {
        analytic.extend_from_slice(lg.weights.data());
        analytic.extend_from_slice(&lg.bias);
        let w = params.layers[i].weights.clone();
        numeric.extend(numeric_grad(w.data(), H_NETWORK, |d| {
            let mut p = params.clone();
            p.layers[i].weights = with_data(&w, d);
            eval(&p, &x)
        }));
        let b = params.layers[i].bias.clone();
        numeric.extend(numeric_grad(&b, H_NETWORK, |d| {
            let mut p = params.clone();
            p.layers[i].bias = d.to_vec();
            eval(&p, &x)
        }));
    }
    rel_error(&analytic, &numeric)
}

/// Six-nested-loop convolution with the library's padding rule.
pub fn oracle_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], spec: &ConvSpec) -> Tensor<f64> {
    let s = x.shape();
    let (k, st) = (spec.kernel as isize, spec.stride as isize);
    let (oh, ow) = (s.h.div_ceil(spec.stride), s.w.div_ceil(spec.stride));
    let pad = |len: usize, out: usize| (((out as isize - 1) * st + k - len as isize).max(0)) / 2;
    let (pt, pl) = (pad(s.h, oh), pad(s.w, ow));
    Tensor::from_fn(Shape::new(s.n, spec.out_channels, oh, ow), |n, o, oy, ox| {
        let mut acc = b[o];
        for c in 0..s.c {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = oy as isize * st + ky - pt;
                    let ix = ox as isize * st + kx - pl;
                    if iy >= 0 && ix >= 0 && iy < s.h as isize && ix < s.w as isize {
                        acc += x.get(n, c, iy as usize, ix as usize) * w.get(o, c, ky as usize, kx as usize);
                    }
                }
            }
        }
        acc
    })
}

/// Zero-padded window mean with a full-area divisor.
pub fn oracle_avgpool(x: &Tensor<f64>, window: usize) -> Tensor<f64> {
    let s = x.shape();
    let r = (window / 2) as isize;
    Tensor::from_fn(s, |n, c, y, xx| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let (iy, ix) = (y as isize + dy, xx as isize + dx);
                if iy >= 0 && ix >= 0 && iy < s.h as isize && ix < s.w as isize {
                    acc += x.get(n, c, iy as usize, ix as usize);
                }
            }
        }
        acc / (window * window) as f64
    })
}

/// 2×2 stride-2 window maximum (first maximum in raster order wins).
pub fn oracle_maxpool(x: &Tensor<f64>) -> (Tensor<f64>, Vec<u8>) {
    let s = x.shape();
    let mut idx = Vec::new();
    let out = Tensor::from_fn(Shape::new(s.n, s.c, s.h / 2, s.w / 2), |n, c, y, xx| {
        let mut best = (f64::NEG_INFINITY, 0u8);
        for i in 0..4u8 {
            let v = x.get(n, c, 2 * y + (i / 2) as usize, 2 * xx + (i % 2) as usize);
            if v > best.0 {
                best = (v, i);
            }
        }
        idx.push(best.1);
        best.0
    });
    (out, idx)
}

/// Canonical topology (three pools, strided encoder/decoder pair) with two
/// channels per layer, small enough for finite differences.
pub fn slim_config(variant: DecoderVariant, point: FusionPoint, mode: FusionMode) -> NetworkConfig {
    let mut cfg = NetworkConfig::build(1, variant, [2, 2, 2, 2, 2, 2, 2, 2, 2, 1], [3, 3, 3, 3, 1, 3, 3, 3, 3, 1])
        .expect("slim config is valid");
    cfg.fusion_point = point;
    cfg.fusion_mode = mode;
    cfg.validate().expect("slim config is valid");
    cfg
}

pub fn all_decoders() -> Vec<DecoderVariant> {
    let mut v = vec![
        DecoderVariant::Full,
        DecoderVariant::PaddingUpsampling,
        DecoderVariant::AverageUpPooling,
    ];
    v.extend((1..=5).map(DecoderVariant::DeConv));
    v
}

/// Random shapes for oracle comparisons: (n, c, h, w, out_channels, kernel,
/// stride).
pub fn random_conv_cases(count: usize, seed: u64) -> Vec<(Shape, usize, usize, usize)> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let shape = Shape::new(
                r.random_range(1..=2),
                r.random_range(1..=4),
                r.random_range(1..=12),
                r.random_range(1..=12),
            );
            let kernel = [1, 3, 5, 7][r.random_range(0..4)];
            (shape, r.random_range(1..=4), kernel, r.random_range(1..=2))
        })
        .collect()
}

/// `<y, A x>` vs `<A^T y, x>` for the transposed convolution `A^T`, relative
/// to the larger magnitude.
pub fn adjoint_gap(shape: Shape, out_channels: usize, kernel: usize, stride: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    // A maps (n, out_channels, ...) -> (n, c, ...); transposed maps back.
    let fwd = ConvSpec::conv(out_channels, shape.c, kernel, stride);
    let bwd = ConvSpec::transposed(shape.c, out_channels, kernel, stride);
    let big = Shape::new(shape.n, out_channels, shape.h * stride, shape.w * stride);
    let x = random_tensor(big, &mut r);
    let w = random_tensor(fwd.weight_shape(), &mut r);
    let ax = conv2d(&x, &w, &vec![0.0; shape.c], &fwd).unwrap();
    let y = random_tensor(ax.shape(), &mut r);
    let aty = transposed_conv2d(&y, &w, &vec![0.0; out_channels], &bwd).unwrap();
    let lhs = probe(&ax, &y);
    let rhs = probe(&aty, &x);
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300)
}

/// SSIM computed window by window from weighted moments.
pub fn oracle_ssim(a: &[u8], b: &[u8], w: usize, h: usize) -> f64 {
    let k = 11;
    let sigma = 1.5f64;
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            g[i * k + j] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    let gs: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= gs);
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for oy in 0..=h - k {
        for ox in 0..=w - k {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let at = (oy + i) * w + ox + j;
                    mx += g[i * k + j] * a[at] as f64;
                    my += g[i * k + j] * b[at] as f64;
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let at = (oy + i) * w + ox + j;
                    let (dx, dy) = (a[at] as f64 - mx, b[at] as f64 - my);
                    vx += g[i * k + j] * dx * dx;
                    vy += g[i * k + j] * dy * dy;
                    cxy += g[i * k + j] * dx * dy;
                }
            }
            total += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Lagrange interpolant through four points.
fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    (0..xs.len())
        .map(|i| {
            let basis: f64 = (0..xs.len())
                .filter(|&j| j != i)
                .map(|j| (x - xs[j]) / (xs[i] - xs[j]))
                .product();
            ys[i] * basis
        })
        .sum()
}

/// Midpoint-rule mean of `f` over `[lo, hi]`.
fn mean_over(lo: f64, hi: f64, samples: usize, f: impl Fn(f64) -> f64) -> f64 {
    let step = (hi - lo) / samples as f64;
    (0..samples).map(|i| f(lo + (i as f64 + 0.5) * step)).sum::<f64>() / samples as f64
}

/// (BD-rate %, BD-PSNR dB) of four-point curves given as (kbps, dB) pairs,
/// by interpolation and 10 000-sample quadrature.
pub fn oracle_bd(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> (f64, f64) {
    let split = |c: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { c.iter().map(|&(r, q)| (r.log10(), q)).unzip() };
    let (ar, aq) = split(anchor);
    let (tr, tq) = split(test);
    let span = |v: &[f64]| (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let shared = |a: &[f64], b: &[f64]| {
        let ((a0, a1), (b0, b1)) = (span(a), span(b));
        (a0.max(b0), a1.min(b1))
    };
    let (q0, q1) = shared(&aq, &tq);
    let rate_gap = mean_over(q0, q1, 10_000, |q| lagrange(&tq, &tr, q) - lagrange(&aq, &ar, q));
    let (r0, r1) = shared(&ar, &tr);
    let psnr_gap = mean_over(r0, r1, 10_000, |r| lagrange(&tr, &tq, r) - lagrange(&ar, &aq, r));
    ((10f64.powf(rate_gap) - 1.0) * 100.0, psnr_gap)
}

/// Plausible four-point RD curve: concave PSNR in log-rate.
pub fn random_rd_curve(r: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut rate = r.random_range(200.0..800.0);
    let mut q = r.random_range(28.0..32.0);
    (0..4)
        .map(|_| {
            let p = (rate, q);
            rate *= r.random_range(1.6..2.4);
            q += r.random_range(1.5..3.0);
            p
        })
        .collect()
}
