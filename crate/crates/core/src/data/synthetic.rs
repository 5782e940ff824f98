use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Plane;

/// A deterministic natural-looking test image: a shaded background, a few
/// overlapping flat and shaded shapes with hard edges, oriented texture
/// patches and mild sensor noise.
pub fn synthetic_image(seed: u64, width: usize, height: usize) -> Plane<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let mut img = vec![0.0f64; width * height];

    let base = rng.random_range(60.0..190.0);
    let (gx, gy) = (rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0));
    let (fx, fy) = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0));
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (x as f64 / w, y as f64 / h);
            img[y * width + x] = base
                + gx * (u - 0.5)
                + gy * (v - 0.5)
                + 15.0 * (std::f64::consts::TAU * fx * u).sin() * (std::f64::consts::TAU * fy * v).cos();
        }
    }

    let shapes = rng.random_range(6..12);
    for _ in 0..shapes {
        let cx = rng.random_range(0.0..w);
        let cy = rng.random_range(0.0..h);
        let rx = rng.random_range(0.05..0.3) * w;
        let ry = rng.random_range(0.05..0.3) * h;
        let level = rng.random_range(10.0..245.0);
        let shade = rng.random_range(-40.0..40.0);
        let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let ellipse = rng.random_bool(0.5);
        let (s, c) = angle.sin_cos();
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let (u, v) = ((dx * c + dy * s) / rx, (-dx * s + dy * c) / ry);
                let inside = if ellipse {
                    u * u + v * v <= 1.0
                } else {
                    u.abs() <= 1.0 && v.abs() <= 1.0
                };
                if inside {
                    img[y * width + x] = level + shade * u;
                }
            }
        }
    }

    let patches = rng.random_range(2..5);
    for _ in 0..patches {
        let x0 = rng.random_range(0..width);
        let y0 = rng.random_range(0..height);
        let pw = rng.random_range(width / 8..width / 3 + 1);
        let ph = rng.random_range(height / 8..height / 3 + 1);
        let period = rng.random_range(3.0..12.0);
        let amp = rng.random_range(10.0..35.0);
        let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (s, c) = angle.sin_cos();
        for y in y0..(y0 + ph).min(height) {
            for x in x0..(x0 + pw).min(width) {
                let t = (x as f64 * c + y as f64 * s) / period;
                img[y * width + x] += amp * (std::f64::consts::TAU * t).sin();
            }
        }
    }

    let noise = Normal::new(0.0, 2.0).expect("valid sigma");
    let data = img
        .into_iter()
        .map(|v| (v + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
        .collect();
    Plane::new(width, height, data).expect("size matches")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_varied() {
        let a = synthetic_image(1, 64, 48);
        assert_eq!(a, synthetic_image(1, 64, 48));
        assert_ne!(a, synthetic_image(2, 64, 48));
        let distinct = a.data().iter().collect::<std::collections::BTreeSet<_>>().len();
        assert!(distinct > 30);
    }
}
