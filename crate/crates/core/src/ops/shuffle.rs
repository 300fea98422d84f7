//! Channel-axis rearrangements: sub-pixel shuffle and its inverse, plus
//! channel concatenation and slicing.

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::tensor::{Shape, TensorBase};

/// (N, C, H, W) → (N, C/r², H·r, W·r): each group of r² input channels
/// interleaves into an r×r grid of output pixels. Output channel `c` takes
/// its (dh, dw) sub-pixel from input channel `c·r² + dh·r + dw`.
pub fn pixel_shuffle<T: Scalar>(x: &TensorBase<T>, r: usize) -> Result<TensorBase<T>> {
    let s = x.shape();
    if r == 0 || !s.c.is_multiple_of(r * r) {
        return Err(Error::shape(
            "pixel_shuffle",
            format!("{} channels not divisible by {}²", s.c, r),
        ));
    }
    if r == 1 {
        return Ok(x.clone());
    }
    let c_out = s.c / (r * r);
    let mut y = TensorBase::zeros(Shape::new(s.n, c_out, s.h * r, s.w * r));
    let out_w = s.w * r;
    for n in 0..s.n {
        for oc in 0..c_out {
            for dh in 0..r {
                for dw in 0..r {
                    let ic = oc * r * r + dh * r + dw;
                    let src = x.plane(n, ic);
                    let dst = y.plane_mut(n, oc);
                    for ih in 0..s.h {
                        let srow = &src[ih * s.w..(ih + 1) * s.w];
                        let drow = &mut dst[(ih * r + dh) * out_w..(ih * r + dh + 1) * out_w];
                        for (iw, &v) in srow.iter().enumerate() {
                            drow[iw * r + dw] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Exact inverse of [`pixel_shuffle`]: (N, C, H·r, W·r) → (N, C·r², H, W).
pub fn pixel_unshuffle<T: Scalar>(x: &TensorBase<T>, r: usize) -> Result<TensorBase<T>> {
    let s = x.shape();
    if r == 0 || !s.h.is_multiple_of(r) || !s.w.is_multiple_of(r) {
        return Err(Error::shape(
            "pixel_unshuffle",
            format!("spatial extents {}×{} not divisible by {r}", s.h, s.w),
        ));
    }
    if r == 1 {
        return Ok(x.clone());
    }
    let (h_out, w_out) = (s.h / r, s.w / r);
    let mut y = TensorBase::zeros(Shape::new(s.n, s.c * r * r, h_out, w_out));
    for n in 0..s.n {
        for ic in 0..s.c {
            let src = x.plane(n, ic);
            for dh in 0..r {
                for dw in 0..r {
                    let oc = ic * r * r + dh * r + dw;
                    let dst = y.plane_mut(n, oc);
                    for oh in 0..h_out {
                        let srow = &src[(oh * r + dh) * s.w..(oh * r + dh + 1) * s.w];
                        let drow = &mut dst[oh * w_out..(oh + 1) * w_out];
                        for (ow, dv) in drow.iter_mut().enumerate() {
                            *dv = srow[ow * r + dw];
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Stacks tensors along the channel axis; all other extents must agree.
pub fn concat_channels<T: Scalar>(parts: &[&TensorBase<T>]) -> Result<TensorBase<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat_channels", "no inputs"))?
        .shape();
    let mut c_total = 0;
    for p in parts {
        let s = p.shape();
        if s.n != first.n || s.h != first.h || s.w != first.w {
            return Err(Error::shape(
                "concat_channels",
                format!("extents {s} incompatible with {first}"),
            ));
        }
        c_total += s.c;
    }
    let mut y = TensorBase::zeros(Shape::new(first.n, c_total, first.h, first.w));
    for n in 0..first.n {
        let mut oc = 0;
        for p in parts {
            for c in 0..p.shape().c {
                y.plane_mut(n, oc).copy_from_slice(p.plane(n, c));
                oc += 1;
            }
        }
    }
    Ok(y)
}

/// Extracts channels `[start, start + len)` as a new tensor.
pub fn slice_channels<T: Scalar>(
    x: &TensorBase<T>,
    start: usize,
    len: usize,
) -> Result<TensorBase<T>> {
    let s = x.shape();
    if len == 0 || start + len > s.c {
        return Err(Error::shape(
            "slice_channels",
            format!("range {start}..{} out of {} channels", start + len, s.c),
        ));
    }
    let mut y = TensorBase::zeros(Shape::new(s.n, len, s.h, s.w));
    for n in 0..s.n {
        for c in 0..len {
            y.plane_mut(n, c).copy_from_slice(x.plane(n, start + c));
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::OracleRng;

    #[test]
    fn shuffle_shape_arithmetic() {
        let x = TensorBase::zeros(Shape::new(1, 192, 8, 8));
        let y = pixel_shuffle::<f32>(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 48, 16, 16));
    }

    #[test]
    fn shuffle_r1_is_identity() {
        let mut rng = OracleRng::new(3);
        let x: TensorBase<f32> = rng.tensor(Shape::new(1, 4, 3, 3), -1.0, 1.0);
        assert_eq!(pixel_shuffle(&x, 1).unwrap().data(), x.data());
    }

    #[test]
    fn shuffle_places_subpixels() {
        // 4 channels of a 1×1 image become one 2×2 image, reading the
        // channels in (dh, dw) order.
        let x = TensorBase::from_vec(Shape::new(1, 4, 1, 1), vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unshuffle_inverts_shuffle() {
        let mut rng = OracleRng::new(5);
        let x: TensorBase<f32> = rng.tensor(Shape::new(2, 8, 3, 5), -1.0, 1.0);
        let y = pixel_shuffle(&x, 2).unwrap();
        let back = pixel_unshuffle(&y, 2).unwrap();
        assert_eq!(back.shape(), x.shape());
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn shuffle_inverts_unshuffle() {
        let mut rng = OracleRng::new(7);
        let x: TensorBase<f32> = rng.tensor(Shape::new(1, 3, 6, 4), -1.0, 1.0);
        let y = pixel_unshuffle(&x, 2).unwrap();
        let back = pixel_shuffle(&y, 2).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn concat_four_sixteens_gives_sixty_four() {
        let parts: Vec<TensorBase<f32>> =
            (0..4).map(|i| TensorBase::filled(Shape::new(1, 16, 2, 2), i as f32)).collect();
        let refs: Vec<&TensorBase<f32>> = parts.iter().collect();
        let y = concat_channels(&refs).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 64, 2, 2));
        assert_eq!(y.at(0, 0, 0, 0), 0.0);
        assert_eq!(y.at(0, 16, 0, 0), 1.0);
        assert_eq!(y.at(0, 63, 1, 1), 3.0);
    }

    #[test]
    fn concat_of_one_is_identity() {
        let mut rng = OracleRng::new(9);
        let x: TensorBase<f32> = rng.tensor(Shape::new(1, 5, 2, 3), -1.0, 1.0);
        assert_eq!(concat_channels(&[&x]).unwrap().data(), x.data());
    }

    #[test]
    fn concat_of_equal_slices_roundtrips() {
        let mut rng = OracleRng::new(11);
        let x: TensorBase<f32> = rng.tensor(Shape::new(1, 64, 4, 4), -1.0, 1.0);
        let quarters: Vec<TensorBase<f32>> =
            (0..4).map(|i| slice_channels(&x, i * 16, 16).unwrap()).collect();
        let refs: Vec<&TensorBase<f32>> = quarters.iter().collect();
        assert_eq!(concat_channels(&refs).unwrap().data(), x.data());
    }

    #[test]
    fn slice_rejects_out_of_range() {
        let x = TensorBase::zeros(Shape::new(1, 4, 2, 2));
        assert!(slice_channels::<f32>(&x, 3, 2).is_err());
    }

    #[test]
    fn concat_rejects_mismatched_extents() {
        let a = TensorBase::zeros(Shape::new(1, 2, 2, 2));
        let b = TensorBase::zeros(Shape::new(1, 2, 3, 2));
        assert!(concat_channels::<f32>(&[&a, &b]).is_err());
    }
}
