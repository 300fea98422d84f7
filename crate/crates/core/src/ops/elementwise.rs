//! Pointwise operations: PReLU, addition, per-channel scaling, and the
//! mean-absolute-error loss.

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::ops::{dot, sum_slice};
use crate::tensor::TensorBase;

fn check_same_shape<T: Scalar>(op: &'static str, a: &TensorBase<T>, b: &TensorBase<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("operand shapes differ: {} vs {}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

/// Leaky rectifier with one learnable slope per channel:
/// `y = x` for `x ≥ 0`, `y = alpha_c·x` otherwise.
pub fn prelu<T: Scalar>(x: &TensorBase<T>, alpha: &[T]) -> Result<TensorBase<T>> {
    let s = x.shape();
    if alpha.len() != s.c {
        return Err(Error::shape(
            "prelu",
            format!("{} slopes for {} channels", alpha.len(), s.c),
        ));
    }
    let mut y = TensorBase::zeros(s);
    for n in 0..s.n {
        for (c, &a) in alpha.iter().enumerate() {
            let xp = x.plane(n, c);
            for (yv, &xv) in y.plane_mut(n, c).iter_mut().zip(xp) {
                *yv = if xv >= T::zero() { xv } else { a * xv };
            }
        }
    }
    Ok(y)
}

/// Backward pass of [`prelu`]: returns (gx, galpha). The slope gradient for
/// channel c collects `gy·x` over the negative inputs of that channel.
pub fn prelu_backward<T: Scalar>(
    x: &TensorBase<T>,
    alpha: &[T],
    gy: &TensorBase<T>,
) -> Result<(TensorBase<T>, Vec<T>)> {
    check_same_shape("prelu", x, gy)?;
    let s = x.shape();
    if alpha.len() != s.c {
        return Err(Error::shape(
            "prelu",
            format!("{} slopes for {} channels", alpha.len(), s.c),
        ));
    }
    let mut gx = TensorBase::zeros(s);
    let mut ga = vec![T::zero(); s.c];
    for n in 0..s.n {
        for c in 0..s.c {
            let a = alpha[c];
            let xp = x.plane(n, c);
            let gp = gy.plane(n, c);
            let mut acc = T::zero();
            for ((gxv, &xv), &gv) in gx.plane_mut(n, c).iter_mut().zip(xp).zip(gp) {
                if xv >= T::zero() {
                    *gxv = gv;
                } else {
                    *gxv = a * gv;
                    acc += gv * xv;
                }
            }
            ga[c] += acc;
        }
    }
    Ok((gx, ga))
}

/// Elementwise sum of two equally-shaped tensors.
pub fn add<T: Scalar>(a: &TensorBase<T>, b: &TensorBase<T>) -> Result<TensorBase<T>> {
    check_same_shape("add", a, b)?;
    let mut y = a.clone();
    for (yv, &bv) in y.data_mut().iter_mut().zip(b.data()) {
        *yv += bv;
    }
    Ok(y)
}

fn check_scale_shapes<T: Scalar>(x: &TensorBase<T>, s: &TensorBase<T>) -> Result<()> {
    let xs = x.shape();
    let ss = s.shape();
    if ss.n != xs.n || ss.c != xs.c || ss.h != 1 || ss.w != 1 {
        return Err(Error::shape(
            "scale_channels",
            format!("scale shape {ss} incompatible with input {xs}"),
        ));
    }
    Ok(())
}

/// Broadcast multiply: every (sample, channel) plane of `x` is scaled by the
/// matching entry of `s`, an (N, C, 1, 1) tensor.
pub fn scale_channels<T: Scalar>(x: &TensorBase<T>, s: &TensorBase<T>) -> Result<TensorBase<T>> {
    check_scale_shapes(x, s)?;
    let xs = x.shape();
    let mut y = TensorBase::zeros(xs);
    for n in 0..xs.n {
        for c in 0..xs.c {
            let f = s.at(n, c, 0, 0);
            for (yv, &xv) in y.plane_mut(n, c).iter_mut().zip(x.plane(n, c)) {
                *yv = f * xv;
            }
        }
    }
    Ok(y)
}

/// Backward pass of [`scale_channels`]: gx = gy·s broadcast, and the scale
/// gradient per (sample, channel) is the spatial dot of gy with x.
pub fn scale_channels_backward<T: Scalar>(
    x: &TensorBase<T>,
    s: &TensorBase<T>,
    gy: &TensorBase<T>,
) -> Result<(TensorBase<T>, TensorBase<T>)> {
    check_scale_shapes(x, s)?;
    check_same_shape("scale_channels", x, gy)?;
    let xs = x.shape();
    let mut gx = TensorBase::zeros(xs);
    let mut gs = TensorBase::zeros(s.shape());
    for n in 0..xs.n {
        for c in 0..xs.c {
            let f = s.at(n, c, 0, 0);
            let gp = gy.plane(n, c);
            for (gxv, &gv) in gx.plane_mut(n, c).iter_mut().zip(gp) {
                *gxv = f * gv;
            }
            *gs.at_mut(n, c, 0, 0) = dot(gp, x.plane(n, c));
        }
    }
    Ok((gx, gs))
}

/// Mean absolute difference, returned as a (1,1,1,1) scalar tensor.
pub fn l1_loss<T: Scalar>(pred: &TensorBase<T>, target: &TensorBase<T>) -> Result<TensorBase<T>> {
    check_same_shape("l1_loss", pred, target)?;
    let mut acc = [T::zero(); 8];
    let pd = pred.data();
    let td = target.data();
    let whole = pd.len() / 8 * 8;
    for (cp, ct) in pd[..whole].chunks_exact(8).zip(td[..whole].chunks_exact(8)) {
        for j in 0..8 {
            acc[j] += (cp[j] - ct[j]).abs();
        }
    }
    for i in whole..pd.len() {
        acc[i - whole] += (pd[i] - td[i]).abs();
    }
    let total = ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
    Ok(TensorBase::scalar(total / T::from_usize(pred.numel())))
}

/// Backward pass of [`l1_loss`]: `sign(pred − target)/numel` scaled by the
/// upstream scalar, with the tie subgradient fixed at 0. Returns the
/// gradient for `pred`; the target gradient is its negation.
pub fn l1_loss_backward<T: Scalar>(
    pred: &TensorBase<T>,
    target: &TensorBase<T>,
    upstream: T,
) -> Result<TensorBase<T>> {
    check_same_shape("l1_loss", pred, target)?;
    let scale = upstream / T::from_usize(pred.numel());
    let mut g = TensorBase::zeros(pred.shape());
    for ((gv, &pv), &tv) in g.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = pv - tv;
        *gv = if d > T::zero() {
            scale
        } else if d < T::zero() {
            -scale
        } else {
            T::zero()
        };
    }
    Ok(g)
}

/// Sum of every element, as a (1,1,1,1) scalar tensor.
pub fn sum_all<T: Scalar>(x: &TensorBase<T>) -> TensorBase<T> {
    TensorBase::scalar(sum_slice(x.data()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn one_channel(values: Vec<f32>) -> TensorBase<f32> {
        let n = values.len();
        TensorBase::from_vec(Shape::new(1, 1, 1, n), values).unwrap()
    }

    #[test]
    fn prelu_zero_slope_is_relu() {
        let x = one_channel(vec![-2.0, 3.0]);
        let y = prelu(&x, &[0.0]).unwrap();
        assert_eq!(y.data(), &[0.0, 3.0]);
    }

    #[test]
    fn prelu_unit_slope_is_identity() {
        let x = one_channel(vec![-2.0, 3.0]);
        let y = prelu(&x, &[1.0]).unwrap();
        assert_eq!(y.data(), &[-2.0, 3.0]);
    }

    #[test]
    fn prelu_slope_gradient_is_negative_input_sum() {
        // d/dalpha of prelu(-2) is -2; finite differences agree.
        let x = one_channel(vec![-2.0]);
        let gy = one_channel(vec![1.0]);
        let (_, ga) = prelu_backward(&x, &[0.3], &gy).unwrap();
        assert_eq!(ga, vec![-2.0]);
        let h = 1e-3f32;
        let up = prelu(&x, &[0.3 + h]).unwrap().data()[0];
        let down = prelu(&x, &[0.3 - h]).unwrap().data()[0];
        let fd = (up - down) / (2.0 * h);
        assert!((ga[0] - fd).abs() < 1e-3);
    }

    #[test]
    fn add_zeros_is_identity() {
        let x = one_channel(vec![1.0, -2.0, 3.5]);
        let z = TensorBase::zeros(x.shape());
        assert_eq!(add(&x, &z).unwrap().data(), x.data());
    }

    #[test]
    fn scale_by_ones_is_identity() {
        let x = TensorBase::from_vec(Shape::new(1, 2, 1, 2), vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let s = TensorBase::filled(Shape::new(1, 2, 1, 1), 1.0f32);
        assert_eq!(scale_channels(&x, &s).unwrap().data(), x.data());
    }

    #[test]
    fn scale_gradient_is_spatial_correlation() {
        // dL/ds_c = Σ_hw gy·x over channel c; with gy = 1 everywhere this is
        // the plane sum — checked against central differences.
        let x = TensorBase::from_vec(Shape::new(1, 2, 1, 2), vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let s = TensorBase::from_vec(Shape::new(1, 2, 1, 1), vec![0.5, -1.5]).unwrap();
        let gy = TensorBase::filled(x.shape(), 1.0f64);
        let (_, gs) = scale_channels_backward(&x, &s, &gy).unwrap();
        assert_eq!(gs.data(), &[3.0, 7.0]);
        let h = 1e-3;
        for c in 0..2 {
            let mut sp = s.clone();
            sp.data_mut()[c] += h;
            let mut sm = s.clone();
            sm.data_mut()[c] -= h;
            let up: f64 = scale_channels(&x, &sp).unwrap().data().iter().sum();
            let down: f64 = scale_channels(&x, &sm).unwrap().data().iter().sum();
            let fd = (up - down) / (2.0 * h);
            assert!((gs.data()[c] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn l1_of_identical_tensors_is_zero() {
        let x = one_channel(vec![1.0, 2.0, 3.0]);
        assert_eq!(l1_loss(&x, &x).unwrap().data()[0], 0.0);
    }

    #[test]
    fn l1_of_constant_offset_is_the_offset() {
        let p = one_channel(vec![1.0, 2.0, 3.0, 4.0]);
        let t = one_channel(vec![0.5, 1.5, 2.5, 3.5]);
        assert!((l1_loss(&p, &t).unwrap().data()[0] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn l1_gradient_is_scaled_sign() {
        let p = one_channel(vec![2.0, -1.0, 5.0, 5.0]);
        let t = one_channel(vec![1.0, 1.0, 5.0, 6.0]);
        let g = l1_loss_backward(&p, &t, 1.0).unwrap();
        assert_eq!(g.data(), &[0.25, -0.25, 0.0, -0.25]);
    }

    #[test]
    fn sum_all_collapses_to_scalar() {
        let x = one_channel(vec![1.0, 2.0, 3.0]);
        let s = sum_all(&x);
        assert_eq!(s.shape(), Shape::new(1, 1, 1, 1));
        assert_eq!(s.data()[0], 6.0);
    }
}
