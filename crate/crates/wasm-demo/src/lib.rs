//! WebAssembly bindings for a static demo page. Each export wraps a plain
//! Rust function of the same name with an `_impl` suffix so the logic can be
//! tested natively.

use mscnn::data::{codec_proxy, synthetic_image, CodecProxyConfig};
use mscnn::fusion::{fuse_forward, FusionMode, FusionParameters};
use mscnn::metrics::{bd_report, psnr, ssim, RdCurve};
use mscnn::{Shape, Tensor};
use wasm_bindgen::prelude::*;

/// Original and degraded versions of a synthetic test image.
#[wasm_bindgen]
pub struct ProxyView {
    original: Vec<u8>,
    degraded: Vec<u8>,
    psnr: f64,
    ssim: f64,
}

#[wasm_bindgen]
impl ProxyView {
    /// Grey levels, row-major.
    #[wasm_bindgen(getter)]
    pub fn original(&self) -> Vec<u8> {
        self.original.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn degraded(&self) -> Vec<u8> {
        self.degraded.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn psnr(&self) -> f64 {
        self.psnr
    }

    #[wasm_bindgen(getter)]
    pub fn ssim(&self) -> f64 {
        self.ssim
    }
}

pub fn codec_proxy_view_impl(seed: u32, size: usize, qp: u32) -> Result<ProxyView, String> {
    if !(16..=512).contains(&size) {
        return Err(format!("size {size} outside 16..=512"));
    }
    let cfg = CodecProxyConfig::new(qp).map_err(|e| e.to_string())?;
    let original = synthetic_image(u64::from(seed), size, size);
    let degraded = codec_proxy(&original, &cfg);
    Ok(ProxyView {
        psnr: psnr(&original, &degraded).map_err(|e| e.to_string())?,
        ssim: ssim(&original, &degraded).map_err(|e| e.to_string())?,
        original: original.into_data(),
        degraded: degraded.into_data(),
    })
}

/// Degrades synthetic image `seed` (`size`×`size`) with the block-DCT codec
/// proxy at `qp`.
#[wasm_bindgen]
pub fn codec_proxy_view(seed: u32, size: usize, qp: u32) -> Result<ProxyView, JsError> {
    codec_proxy_view_impl(seed, size, qp).map_err(|e| JsError::new(&e))
}

/// `[G, fused]` for constant single-channel maps through the real gate:
/// zero gate weights, `gate_logit` as the bias.
pub fn fuse_constant_impl(f_cur: f64, f_ref: f64, gate_logit: f64, multiplicative: bool) -> Result<Vec<f64>, String> {
    let mode = if multiplicative { FusionMode::Multiplicative } else { FusionMode::Additive };
    let mut params = FusionParameters::<f64>::zeros(1, 3, mode);
    params.gate_bias = vec![gate_logit];
    let shape = Shape::new(1, 1, 3, 3);
    let (fused, bundle) = fuse_forward(&Tensor::full(shape, f_cur), &Tensor::full(shape, f_ref), &params)
        .map_err(|e| e.to_string())?;
    Ok(vec![bundle.gate().get(0, 0, 1, 1), fused.get(0, 0, 1, 1)])
}

#[wasm_bindgen]
pub fn fuse_constant(f_cur: f64, f_ref: f64, gate_logit: f64, multiplicative: bool) -> Result<Vec<f64>, JsError> {
    fuse_constant_impl(f_cur, f_ref, gate_logit, multiplicative).map_err(|e| JsError::new(&e))
}

/// `[BD-rate %, BD-PSNR dB]` from two `bitrate_kbps,psnr_db` CSV texts.
pub fn bd_from_csv_impl(anchor: &str, test: &str) -> Result<Vec<f64>, String> {
    let a = RdCurve::from_csv("anchor", anchor).map_err(|e| e.to_string())?;
    let t = RdCurve::from_csv("test", test).map_err(|e| e.to_string())?;
    let r = bd_report(&a, &t).map_err(|e| e.to_string())?;
    Ok(vec![r.bd_rate, r.bd_psnr])
}

#[wasm_bindgen]
pub fn bd_from_csv(anchor: &str, test: &str) -> Result<Vec<f64>, JsError> {
    bd_from_csv_impl(anchor, test).map_err(|e| JsError::new(&e))
}

/// RGBA bytes for drawing a grey plane into a canvas.
#[wasm_bindgen]
pub fn grey_to_rgba(grey: &[u8]) -> Vec<u8> {
    grey.iter().flat_map(|&g| [g, g, g, 255]).collect()
}

/// Absolute difference, amplified ×4, for showing where the proxy errs.
#[wasm_bindgen]
pub fn error_map(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x.abs_diff(y) as u16 * 4).min(255) as u8)
        .collect()
}

