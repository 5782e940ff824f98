mod common;

use common::*;
use mscnn::data::Plane;
use mscnn::metrics::{bd_psnr, bd_rate, psnr, ssim, RdCurve, RdPoint};
use mscnn::tensor::*;
use rand::Rng;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn conv2d_matches_nested_loops() {
    let mut r = rng(1);
    for (shape, cout, k, s) in random_conv_cases(50, 2) {
        let spec = ConvSpec::conv(shape.c, cout, k, s);
        let x = random_tensor(shape, &mut r);
        let w = random_tensor(spec.weight_shape(), &mut r);
        let b: Vec<f64> = (0..cout).map(|_| r.random_range(-1.0..1.0)).collect();
        let got = conv2d(&x, &w, &b, &spec).unwrap();
        let want = oracle_conv(&x, &w, &b, &spec);
        assert_eq!(got.shape(), want.shape());
        assert!(max_abs_diff(got.data(), want.data()) < 1e-6, "{shape} k{k} s{s}");
    }
}

#[test]
fn pools_match_nested_loops() {
    let mut r = rng(3);
    for _ in 0..50 {
        let shape = Shape::new(
            r.random_range(1..=2),
            r.random_range(1..=3),
            2 * r.random_range(1..=7),
            2 * r.random_range(1..=7),
        );
        let x = random_tensor(shape, &mut r);
        let window = [1, 3, 5, 7][r.random_range(0..4)];
        let got = avgpool_same(&x, window).unwrap();
        assert!(max_abs_diff(got.data(), oracle_avgpool(&x, window).data()) < 1e-6);

        let (pooled, switches) = maxpool2x2(&x).unwrap();
        let (want, idx) = oracle_maxpool(&x);
        assert!(max_abs_diff(pooled.data(), want.data()) < 1e-6);
        assert_eq!(switches.indices(), &idx[..]);
    }
}

#[test]
fn transposed_conv_is_the_adjoint() {
    let mut r = rng(4);
    for i in 0..50 {
        let shape = Shape::new(r.random_range(1..=2), r.random_range(1..=4), r.random_range(1..=8), r.random_range(1..=8));
        let k = [1, 3, 5][r.random_range(0..3)];
        let gap = adjoint_gap(shape, r.random_range(1..=4), k, r.random_range(1..=2), i);
        assert!(gap < 1e-5, "{shape} k{k}: {gap:e}");
    }
}

#[test]
fn ssim_matches_windowed_moments() {
    let mut r = rng(5);
    for _ in 0..5 {
        let (w, h) = (r.random_range(11..30), r.random_range(11..30));
        let a: Vec<u8> = (0..w * h).map(|_| r.random()).collect();
        let b: Vec<u8> = a.iter().map(|&v| v.saturating_add(r.random_range(0..40))).collect();
        let pa = Plane::new(w, h, a.clone()).unwrap();
        let pb = Plane::new(w, h, b.clone()).unwrap();
        let got = ssim(&pa, &pb).unwrap();
        assert!((got - oracle_ssim(&a, &b, w, h)).abs() < 1e-9);
        assert!((ssim(&pa, &pa).unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn psnr_matches_closed_form() {
    let a = Plane::from_fn(40, 24, |x, y| ((x * 5 + y * 11) % 250) as u8);
    // Errors of ±3 on alternate pixels: MSE = 4.5.
    let b = Plane::from_fn(40, 24, |x, y| {
        let v = a.get(x, y) as i32 + if (x + y) % 2 == 0 { 3 } else { -3 };
        v.clamp(0, 255) as u8
    });
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| (p as f64 - q as f64).powi(2))
        .sum::<f64>()
        / a.data().len() as f64;
    let want = 10.0 * (255.0f64 * 255.0 / mse).log10();
    assert!((psnr(&a, &b).unwrap() - want).abs() < 1e-12);
}

fn curve(label: &str, pts: &[(f64, f64)]) -> RdCurve {
    RdCurve::new(label, pts.iter().map(|&(bitrate, quality)| RdPoint { bitrate, quality }).collect()).unwrap()
}

#[test]
fn bd_metrics_match_quadrature() {
    let mut r = rng(6);
    let mut compared = 0;
    for _ in 0..30 {
        let a = random_rd_curve(&mut r);
        let t = random_rd_curve(&mut r);
        let (want_rate, want_psnr) = oracle_bd(&a, &t);
        let (ca, ct) = (curve("a", &a), curve("t", &t));
        let (Ok(rate), Ok(dpsnr)) = (bd_rate(&ca, &ct), bd_psnr(&ca, &ct)) else {
            continue;
        };
        assert!((rate - want_rate).abs() < 0.05, "{rate} vs {want_rate}");
        assert!((dpsnr - want_psnr).abs() < 0.005, "{dpsnr} vs {want_psnr}");
        compared += 1;
    }
    assert!(compared >= 20, "only {compared} curve pairs overlapped");
}
