//! Grouped 2-D cross-correlation, forward and backward.
//!
//! The forward pass lowers each (sample, group) to a patch matrix
//! (im2col) and runs an accumulate-row GEMM over it; the backward pass
//! reuses the same lowering for the weight gradient (row dot products)
//! and inverts it (col2im) for the input gradient. Patch matrices are
//! built tile-by-tile over output rows so the scratch buffer stays a few
//! megabytes regardless of image size. 1×1/stride-1/no-padding layers
//! skip the lowering entirely — the input planes already are the patch
//! matrix.

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::ops::{axpy, dot, sum_slice};
use crate::tensor::{ConvSpec, Shape, TensorBase};

/// Output-row tile height chosen so a K×(rows·out_w) scratch matrix stays
/// near one million elements. `force` pins the height (test hook proving
/// tiling cannot change results).
fn tile_rows(k: usize, out_w: usize, out_h: usize, force: Option<usize>) -> usize {
    if let Some(rows) = force {
        return rows.clamp(1, out_h);
    }
    let budget = 1usize << 20;
    (budget / (k * out_w).max(1)).clamp(1, out_h)
}

fn check_args<T: Scalar>(
    x: &TensorBase<T>,
    w: &TensorBase<T>,
    b: Option<&[T]>,
    spec: &ConvSpec,
) -> Result<(usize, usize)> {
    spec.validate()?;
    let xs = x.shape();
    if xs.c != spec.in_channels {
        return Err(Error::shape(
            "conv2d",
            format!("input has {} channels, spec expects {}", xs.c, spec.in_channels),
        ));
    }
    if w.shape() != spec.weight_shape() {
        return Err(Error::shape(
            "conv2d",
            format!("weight shape {} does not match spec {}", w.shape(), spec.weight_shape()),
        ));
    }
    match b {
        Some(bv) if !spec.bias => {
            let _ = bv;
            return Err(Error::shape("conv2d", "bias supplied but spec declares none"));
        }
        None if spec.bias => {
            return Err(Error::shape("conv2d", "spec declares a bias but none supplied"));
        }
        Some(bv) if bv.len() != spec.out_channels => {
            return Err(Error::shape(
                "conv2d",
                format!("bias length {} != out channels {}", bv.len(), spec.out_channels),
            ));
        }
        _ => {}
    }
    spec.out_hw(xs.h, xs.w)
}

/// True when the lowering is the identity and input planes can be used as
/// the patch matrix directly.
fn is_pointwise(spec: &ConvSpec) -> bool {
    spec.kernel == (1, 1) && spec.padding == 0 && spec.stride == 1
}

/// Fills `col` (K rows × tile_p columns, K = cin_g·kh·kw) with the patches
/// feeding output rows `oh0..oh1` of sample `n`, group `g`.
#[allow(clippy::too_many_arguments)]
fn im2col_tile<T: Scalar>(
    x: &TensorBase<T>,
    n: usize,
    g: usize,
    spec: &ConvSpec,
    out_w: usize,
    oh0: usize,
    oh1: usize,
    col: &mut [T],
) {
    let xs = x.shape();
    let cin_g = spec.in_channels / spec.groups;
    let tile_p = (oh1 - oh0) * out_w;
    let (kh_n, kw_n) = spec.kernel;
    let pad = spec.padding as isize;
    let mut r = 0usize;
    for icg in 0..cin_g {
        let plane = x.plane(n, g * cin_g + icg);
        for kh in 0..kh_n {
            for kw in 0..kw_n {
                let row = &mut col[r * tile_p..(r + 1) * tile_p];
                r += 1;
                for (ti, oh) in (oh0..oh1).enumerate() {
                    let seg = &mut row[ti * out_w..(ti + 1) * out_w];
                    let ih = (oh * spec.stride + kh) as isize - pad;
                    if ih < 0 || ih >= xs.h as isize {
                        seg.fill(T::zero());
                        continue;
                    }
                    let xrow = &plane[ih as usize * xs.w..(ih as usize + 1) * xs.w];
                    if spec.stride == 1 {
                        // iw = ow + kw - pad must land in [0, xs.w)
                        let lo = (pad - kw as isize).clamp(0, out_w as isize) as usize;
                        let hi = (xs.w as isize + pad - kw as isize).clamp(0, out_w as isize) as usize;
                        seg[..lo].fill(T::zero());
                        seg[hi..].fill(T::zero());
                        if lo < hi {
                            let src0 = (lo as isize + kw as isize - pad) as usize;
                            seg[lo..hi].copy_from_slice(&xrow[src0..src0 + (hi - lo)]);
                        }
                    } else {
                        for (ow, sv) in seg.iter_mut().enumerate() {
                            let iw = (ow * spec.stride + kw) as isize - pad;
                            *sv = if iw >= 0 && iw < xs.w as isize {
                                xrow[iw as usize]
                            } else {
                                T::zero()
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch-matrix gradient back onto the input gradient —
/// the exact adjoint of [`im2col_tile`].
#[allow(clippy::too_many_arguments)]
fn col2im_tile<T: Scalar>(
    gx: &mut TensorBase<T>,
    n: usize,
    g: usize,
    spec: &ConvSpec,
    out_w: usize,
    oh0: usize,
    oh1: usize,
    col: &[T],
) {
    let xs = gx.shape();
    let cin_g = spec.in_channels / spec.groups;
    let tile_p = (oh1 - oh0) * out_w;
    let (kh_n, kw_n) = spec.kernel;
    let pad = spec.padding as isize;
    let mut r = 0usize;
    for icg in 0..cin_g {
        let plane = gx.plane_mut(n, g * cin_g + icg);
        for kh in 0..kh_n {
            for kw in 0..kw_n {
                let row = &col[r * tile_p..(r + 1) * tile_p];
                r += 1;
                for (ti, oh) in (oh0..oh1).enumerate() {
                    let seg = &row[ti * out_w..(ti + 1) * out_w];
                    let ih = (oh * spec.stride + kh) as isize - pad;
                    if ih < 0 || ih >= xs.h as isize {
                        continue;
                    }
                    let xrow = &mut plane[ih as usize * xs.w..(ih as usize + 1) * xs.w];
                    if spec.stride == 1 {
                        let lo = (pad - kw as isize).clamp(0, out_w as isize) as usize;
                        let hi = (xs.w as isize + pad - kw as isize).clamp(0, out_w as isize) as usize;
                        if lo < hi {
                            let src0 = (lo as isize + kw as isize - pad) as usize;
                            axpy(&mut xrow[src0..src0 + (hi - lo)], T::one(), &seg[lo..hi]);
                        }
                    } else {
                        for (ow, &sv) in seg.iter().enumerate() {
                            let iw = (ow * spec.stride + kw) as isize - pad;
                            if iw >= 0 && iw < xs.w as isize {
                                xrow[iw as usize] += sv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Grouped cross-correlation with optional per-output-channel bias.
pub fn conv2d<T: Scalar>(
    x: &TensorBase<T>,
    w: &TensorBase<T>,
    b: Option<&[T]>,
    spec: &ConvSpec,
) -> Result<TensorBase<T>> {
    conv2d_tiled(x, w, b, spec, None)
}

fn conv2d_tiled<T: Scalar>(
    x: &TensorBase<T>,
    w: &TensorBase<T>,
    b: Option<&[T]>,
    spec: &ConvSpec,
    force_rows: Option<usize>,
) -> Result<TensorBase<T>> {
    let (out_h, out_w) = check_args(x, w, b, spec)?;
    let xs = x.shape();
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let k = cin_g * spec.kernel.0 * spec.kernel.1;
    let mut y = TensorBase::zeros(Shape::new(xs.n, spec.out_channels, out_h, out_w));
    let wdata = w.data();

    if is_pointwise(spec) {
        // Input planes are the patch matrix: one GEMM per (sample, group).
        let p = out_h * out_w;
        for n in 0..xs.n {
            for g in 0..spec.groups {
                let xbase = (n * xs.c + g * cin_g) * p;
                let col = &x.data()[xbase..xbase + cin_g * p];
                for ocg in 0..cout_g {
                    let oc = g * cout_g + ocg;
                    let wrow = &wdata[oc * k..(oc + 1) * k];
                    let ybase = (n * spec.out_channels + oc) * p;
                    let yrow = &mut y.data_mut()[ybase..ybase + p];
                    if let Some(bv) = b {
                        yrow.fill(bv[oc]);
                    }
                    for (ki, &wv) in wrow.iter().enumerate() {
                        axpy(yrow, wv, &col[ki * p..(ki + 1) * p]);
                    }
                }
            }
        }
        return Ok(y);
    }

    let rows = tile_rows(k, out_w, out_h, force_rows);
    let mut col = vec![T::zero(); k * rows * out_w];
    for n in 0..xs.n {
        for g in 0..spec.groups {
            let mut oh0 = 0;
            while oh0 < out_h {
                let oh1 = (oh0 + rows).min(out_h);
                let tile_p = (oh1 - oh0) * out_w;
                im2col_tile(x, n, g, spec, out_w, oh0, oh1, &mut col[..k * tile_p]);
                for ocg in 0..cout_g {
                    let oc = g * cout_g + ocg;
                    let wrow = &wdata[oc * k..(oc + 1) * k];
                    let ybase = ((n * spec.out_channels + oc) * out_h + oh0) * out_w;
                    let yrow = &mut y.data_mut()[ybase..ybase + tile_p];
                    if let Some(bv) = b {
                        yrow.fill(bv[oc]);
                    }
                    for (ki, &wv) in wrow.iter().enumerate() {
                        axpy(yrow, wv, &col[ki * tile_p..(ki + 1) * tile_p]);
                    }
                }
                oh0 = oh1;
            }
        }
    }
    Ok(y)
}

/// Gradients produced by [`conv2d_backward`]; fields are `None` when the
/// caller did not request them.
pub struct ConvGrads<T> {
    pub x: Option<TensorBase<T>>,
    pub w: Option<TensorBase<T>>,
    pub b: Option<Vec<T>>,
}

/// Backward pass of [`conv2d`]. `gy` must have the forward output shape.
/// The bias gradient is produced whenever `spec.bias` is set.
pub fn conv2d_backward<T: Scalar>(
    x: &TensorBase<T>,
    w: &TensorBase<T>,
    spec: &ConvSpec,
    gy: &TensorBase<T>,
    need_x: bool,
    need_w: bool,
) -> Result<ConvGrads<T>> {
    spec.validate()?;
    let xs = x.shape();
    let (out_h, out_w) = spec.out_hw(xs.h, xs.w)?;
    let gys = gy.shape();
    if gys != Shape::new(xs.n, spec.out_channels, out_h, out_w) {
        return Err(Error::shape(
            "conv2d_backward",
            format!("upstream gradient shape {gys} does not match output"),
        ));
    }
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let k = cin_g * spec.kernel.0 * spec.kernel.1;

    let gb = if spec.bias {
        let mut gb = vec![T::zero(); spec.out_channels];
        for (oc, g) in gb.iter_mut().enumerate() {
            for n in 0..xs.n {
                *g += sum_slice(gy.plane(n, oc));
            }
        }
        Some(gb)
    } else {
        None
    };

    let mut gw = need_w.then(|| TensorBase::zeros(spec.weight_shape()));
    let mut gx = need_x.then(|| TensorBase::zeros(xs));

    if !need_x && !need_w {
        return Ok(ConvGrads { x: None, w: None, b: gb });
    }

    let wdata = w.data();
    if is_pointwise(spec) {
        let p = out_h * out_w;
        for n in 0..xs.n {
            for g in 0..spec.groups {
                let xbase = (n * xs.c + g * cin_g) * p;
                for ocg in 0..cout_g {
                    let oc = g * cout_g + ocg;
                    let gybase = (n * spec.out_channels + oc) * p;
                    let gyrow = &gy.data()[gybase..gybase + p];
                    if let Some(gw) = gw.as_mut() {
                        let grow = &mut gw.data_mut()[oc * k..(oc + 1) * k];
                        let col = &x.data()[xbase..xbase + cin_g * p];
                        for (ki, gv) in grow.iter_mut().enumerate() {
                            *gv += dot(gyrow, &col[ki * p..(ki + 1) * p]);
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        let wrow = &wdata[oc * k..(oc + 1) * k];
                        for (ki, &wv) in wrow.iter().enumerate() {
                            let gxrow = &mut gx.data_mut()[xbase + ki * p..xbase + (ki + 1) * p];
                            axpy(gxrow, wv, gyrow);
                        }
                    }
                }
            }
        }
        return Ok(ConvGrads { x: gx, w: gw, b: gb });
    }

    let rows = tile_rows(k, out_w, out_h, None);
    let mut col = vec![T::zero(); k * rows * out_w];
    let mut gcol = if need_x {
        vec![T::zero(); k * rows * out_w]
    } else {
        Vec::new()
    };
    for n in 0..xs.n {
        for g in 0..spec.groups {
            let mut oh0 = 0;
            while oh0 < out_h {
                let oh1 = (oh0 + rows).min(out_h);
                let tile_p = (oh1 - oh0) * out_w;
                if need_w {
                    im2col_tile(x, n, g, spec, out_w, oh0, oh1, &mut col[..k * tile_p]);
                }
                if need_x {
                    gcol[..k * tile_p].fill(T::zero());
                }
                for ocg in 0..cout_g {
                    let oc = g * cout_g + ocg;
                    let gybase = ((n * spec.out_channels + oc) * out_h + oh0) * out_w;
                    let gyrow = &gy.data()[gybase..gybase + tile_p];
                    if let Some(gw) = gw.as_mut() {
                        let grow = &mut gw.data_mut()[oc * k..(oc + 1) * k];
                        for (ki, gv) in grow.iter_mut().enumerate() {
                            *gv += dot(gyrow, &col[ki * tile_p..(ki + 1) * tile_p]);
                        }
                    }
                    if need_x {
                        let wrow = &wdata[oc * k..(oc + 1) * k];
                        for (ki, &wv) in wrow.iter().enumerate() {
                            axpy(&mut gcol[ki * tile_p..(ki + 1) * tile_p], wv, gyrow);
                        }
                    }
                }
                if let Some(gx) = gx.as_mut() {
                    col2im_tile(gx, n, g, spec, out_w, oh0, oh1, &gcol[..k * tile_p]);
                }
                oh0 = oh1;
            }
        }
    }
    Ok(ConvGrads { x: gx, w: gw, b: gb })
}
