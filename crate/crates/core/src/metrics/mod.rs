//! Objective quality (PSNR, SSIM) and Bjøntegaard rate–distortion deltas.

mod bd;
mod quality;

pub use bd::{bd_psnr, bd_rate, bd_report, BdReport, RdCurve, RdPoint, CSV_HEADER, MIN_POINTS};
pub use quality::{gaussian_taps, mse, psnr, psnr_from_mse, psnr_with_peak, sequence_psnr, ssim, PEAK_8BIT, SSIM_SIGMA, SSIM_WINDOW};
