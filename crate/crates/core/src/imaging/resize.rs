//! Bicubic resampling with the conventions of the reference resizer used
//! throughout the super-resolution literature: Keys kernel (a = −0.5),
//! half-pixel coordinate mapping, kernel widened by the scale factor when
//! downscaling (antialiasing), per-pixel weight normalization, and edge
//! handling by index clamping. Accumulation in f64.

use crate::error::{Error, Result};
use crate::imaging::ImagePlane;

/// The Keys cubic convolution kernel with a = −0.5.
pub fn keys_kernel(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Per-output-pixel contributions along one axis: the first contributing
/// input index and the normalized weights.
struct AxisTap {
    start: usize,
    weights: Vec<f64>,
}

fn axis_contributions(in_len: usize, out_len: usize, ratio: f64) -> Vec<AxisTap> {
    // When shrinking, stretch the kernel by 1/ratio so it averages over the
    // source footprint of one output pixel (antialiasing).
    let kernel_scale = if ratio < 1.0 { ratio } else { 1.0 };
    let support = 2.0 / kernel_scale;
    let taps = support.ceil() as isize * 2 + 2;

    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let u = (i as f64 + 0.5) / ratio - 0.5;
        let left = (u - support).floor() as isize;
        let mut weights = Vec::with_capacity(taps as usize);
        let mut start = isize::MAX;
        let mut sum = 0.0;
        let mut raw = Vec::with_capacity(taps as usize);
        for j in left..left + taps {
            let w = kernel_scale * keys_kernel(kernel_scale * (u - j as f64));
            raw.push((j, w));
            sum += w;
        }
        for (j, w) in raw {
            let clamped = j.clamp(0, in_len as isize - 1) as usize;
            if start == isize::MAX {
                start = clamped as isize;
            }
            let idx = clamped - start as usize;
            if idx >= weights.len() {
                weights.resize(idx + 1, 0.0);
            }
            weights[idx] += w / sum;
        }
        out.push(AxisTap {
            start: start as usize,
            weights,
        });
    }
    out
}

fn resample_rows(
    src: &[f32],
    in_w: usize,
    rows: usize,
    taps: &[AxisTap],
    dst: &mut Vec<f64>,
) {
    let out_w = taps.len();
    dst.clear();
    dst.reserve(rows * out_w);
    for y in 0..rows {
        let row = &src[y * in_w..(y + 1) * in_w];
        for tap in taps {
            let mut acc = 0.0f64;
            for (k, &w) in tap.weights.iter().enumerate() {
                acc += w * row[tap.start + k] as f64;
            }
            dst.push(acc);
        }
    }
}

/// Resizes by the rational factor `num/den` (both axes), e.g. (1, 3) for
/// ×1/3 degradation or (4, 1) for ×4 upscaling. Output extents are
/// `ceil(len·num/den)`; output values are clamped to [0,1].
pub fn bicubic_resize(img: &ImagePlane, num: usize, den: usize) -> Result<ImagePlane> {
    if num == 0 || den == 0 {
        return Err(Error::Image(format!(
            "scale factor must be positive (got {num}/{den})"
        )));
    }
    let ratio = num as f64 / den as f64;
    let out_w = ((img.width() * num) as f64 / den as f64).ceil() as usize;
    let out_h = ((img.height() * num) as f64 / den as f64).ceil() as usize;
    if out_w == 0 || out_h == 0 {
        return Err(Error::Image(format!(
            "target size {out_w}×{out_h} from {}×{} at {num}/{den}",
            img.width(),
            img.height()
        )));
    }

    let x_taps = axis_contributions(img.width(), out_w, ratio);
    let y_taps = axis_contributions(img.height(), out_h, ratio);

    let mut out = ImagePlane::zeros(out_w, out_h, img.channels(), img.colorspace());
    let mut horizontal = Vec::new();
    for c in 0..img.channels() {
        // Width pass: (in_h × in_w) → (in_h × out_w), f64.
        resample_rows(img.plane(c), img.width(), img.height(), &x_taps, &mut horizontal);
        // Height pass: walk columns of the intermediate.
        let hw_out = out_h * out_w;
        let plane =
            &mut out.data_mut()[c * hw_out..(c + 1) * hw_out];
        for (oy, tap) in y_taps.iter().enumerate() {
            for ox in 0..out_w {
                let mut acc = 0.0f64;
                for (k, &w) in tap.weights.iter().enumerate() {
                    acc += w * horizontal[(tap.start + k) * out_w + ox];
                }
                plane[oy * out_w + ox] = acc.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok(out)
}

/// Trims an image so both extents are divisible by `scale` (the standard
/// preparation before ×1/scale degradation, so SR output and ground truth
/// align exactly).
pub fn modcrop(img: &ImagePlane, scale: usize) -> Result<ImagePlane> {
    if scale == 0 {
        return Err(Error::Image("modcrop scale must be positive".to_string()));
    }
    let w = img.width() - img.width() % scale;
    let h = img.height() - img.height() % scale;
    img.crop(0, 0, w, h)
}

/// Standard degradation: modcrop the ground truth to a multiple of
/// `scale`, then bicubic-downscale by 1/scale. Returns (cropped HR, LR).
pub fn degrade(hr: &ImagePlane, scale: usize) -> Result<(ImagePlane, ImagePlane)> {
    let hr = modcrop(hr, scale)?;
    let lr = bicubic_resize(&hr, 1, scale)?;
    Ok((hr, lr))
}
