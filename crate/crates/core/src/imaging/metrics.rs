//! Evaluation metrics on the luma channel, computed in f64: PSNR and
//! single-scale SSIM (11×11 Gaussian window, σ = 1.5), both after cropping
//! `border_crop` pixels per side (set to the scale factor by convention).

use crate::error::{Error, Result};
use crate::imaging::ImagePlane;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
/// Dynamic range of [0,1] data.
const DYNAMIC_RANGE: f64 = 1.0;

fn check_pair(a: &ImagePlane, b: &ImagePlane, border_crop: usize) -> Result<(usize, usize)> {
    if a.channels() != 1 || b.channels() != 1 {
        return Err(Error::Image(
            "metrics expect single-channel (luma) images".to_string(),
        ));
    }
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Image(format!(
            "extent mismatch: {}×{} vs {}×{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let w = a.width() as isize - 2 * border_crop as isize;
    let h = a.height() as isize - 2 * border_crop as isize;
    if w <= 0 || h <= 0 {
        return Err(Error::Image(format!(
            "border crop {border_crop} consumes the whole {}×{} image",
            a.width(),
            a.height()
        )));
    }
    Ok((w as usize, h as usize))
}

/// Peak signal-to-noise ratio in dB on [0,1] data: 10·log10(1/MSE).
/// Returns +∞ when the cropped regions are identical.
pub fn psnr_y(sr: &ImagePlane, hr: &ImagePlane, border_crop: usize) -> Result<f64> {
    let (w, h) = check_pair(sr, hr, border_crop)?;
    let mut sum = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let d = sr.at(0, y + border_crop, x + border_crop) as f64
                - hr.at(0, y + border_crop, x + border_crop) as f64;
            sum += d * d;
        }
    }
    let mse = sum / (w * h) as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - half;
            let dx = x as f64 - half;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean structural similarity over all fully-interior 11×11 windows of the
/// cropped region. Result is in [−1, 1]; identical inputs give exactly 1.
pub fn ssim_y(sr: &ImagePlane, hr: &ImagePlane, border_crop: usize) -> Result<f64> {
    let (w, h) = check_pair(sr, hr, border_crop)?;
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Image(format!(
            "cropped region {w}×{h} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window"
        )));
    }
    let win = gaussian_window();
    let c1 = (SSIM_K1 * DYNAMIC_RANGE) * (SSIM_K1 * DYNAMIC_RANGE);
    let c2 = (SSIM_K2 * DYNAMIC_RANGE) * (SSIM_K2 * DYNAMIC_RANGE);

    let mut total = 0.0f64;
    let mut count = 0u64;
    for wy in 0..=h - SSIM_WINDOW {
        for wx in 0..=w - SSIM_WINDOW {
            let mut mu_a = 0.0f64;
            let mut mu_b = 0.0f64;
            let mut aa = 0.0f64;
            let mut bb = 0.0f64;
            let mut ab = 0.0f64;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let g = win[ky * SSIM_WINDOW + kx];
                    let a = sr.at(0, border_crop + wy + ky, border_crop + wx + kx) as f64;
                    let b = hr.at(0, border_crop + wy + ky, border_crop + wx + kx) as f64;
                    mu_a += g * a;
                    mu_b += g * b;
                    aa += g * a * a;
                    bb += g * b * b;
                    ab += g * a * b;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let numerator = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += numerator / denominator;
            count += 1;
        }
    }
    Ok(total / count as f64)
}
