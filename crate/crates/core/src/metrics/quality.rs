use crate::data::Plane;
use crate::error::{Error, Result};

pub const PEAK_8BIT: f64 = 255.0;

pub fn mse(a: &Plane<u8>, b: &Plane<u8>) -> Result<f64> {
    a.same_size(b, "mse")?;
    if a.data().is_empty() {
        return Err(Error::InvalidArgument("empty planes".into()));
    }
    let sum: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| u64::from(x.abs_diff(y)).pow(2))
        .sum();
    Ok(sum as f64 / a.data().len() as f64)
}

/// `10 log10(peak² / mse)`; identical inputs give `f64::INFINITY`.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(a: &Plane<u8>, b: &Plane<u8>) -> Result<f64> {
    psnr_with_peak(a, b, PEAK_8BIT)
}

pub fn psnr_with_peak(a: &Plane<u8>, b: &Plane<u8>, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

/// PSNR of the mean per-frame MSE (not the mean of per-frame PSNRs).
pub fn sequence_psnr<'a>(pairs: impl IntoIterator<Item = (&'a Plane<u8>, &'a Plane<u8>)>) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (a, b) in pairs {
        total += mse(a, b)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no frames".into()));
    }
    Ok(psnr_from_mse(total / n as f64, PEAK_8BIT))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering: one output per full window position.
fn filter_valid(data: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean structural similarity over every valid 11×11 Gaussian window
/// (σ = 1.5, K1 = 0.01, K2 = 0.03, 8-bit dynamic range).
pub fn ssim(a: &Plane<u8>, b: &Plane<u8>) -> Result<f64> {
    a.same_size(b, "ssim")?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs planes of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let x: Vec<f64> = a.data().iter().map(|&v| f64::from(v)).collect();
    let y: Vec<f64> = b.data().iter().map(|&v| f64::from(v)).collect();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let mx = filter_valid(&x, w, h, &taps);
    let my = filter_valid(&y, w, h, &taps);
    let mxx = filter_valid(&prod(&x, &x), w, h, &taps);
    let myy = filter_valid(&prod(&y, &y), w, h, &taps);
    let mxy = filter_valid(&prod(&x, &y), w, h, &taps);
    let c1 = (K1 * PEAK_8BIT).powi(2);
    let c2 = (K2 * PEAK_8BIT).powi(2);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}
