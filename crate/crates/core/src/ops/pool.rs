//! Global average pooling and the cross-level softmax used by the fusion
//! module.

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::ops::sum_slice;
use crate::tensor::{Shape, TensorBase};

/// Spatial mean per (sample, channel): (N,C,H,W) → (N,C,1,1).
pub fn global_avg_pool<T: Scalar>(x: &TensorBase<T>) -> Result<TensorBase<T>> {
    let s = x.shape();
    if s.h == 0 || s.w == 0 {
        return Err(Error::shape("global_avg_pool", "empty spatial extent"));
    }
    let count = T::from_usize(s.h * s.w);
    let mut y = TensorBase::zeros(Shape::new(s.n, s.c, 1, 1));
    for n in 0..s.n {
        for c in 0..s.c {
            *y.at_mut(n, c, 0, 0) = sum_slice(x.plane(n, c)) / count;
        }
    }
    Ok(y)
}

/// Backward pass of [`global_avg_pool`]: spreads each upstream entry evenly
/// over its source plane.
pub fn global_avg_pool_backward<T: Scalar>(
    x_shape: Shape,
    gy: &TensorBase<T>,
) -> Result<TensorBase<T>> {
    let gys = gy.shape();
    if gys != Shape::new(x_shape.n, x_shape.c, 1, 1) {
        return Err(Error::shape(
            "global_avg_pool",
            format!("upstream gradient {gys} does not match pooled shape"),
        ));
    }
    let inv = T::one() / T::from_usize(x_shape.h * x_shape.w);
    let mut gx = TensorBase::zeros(x_shape);
    for n in 0..x_shape.n {
        for c in 0..x_shape.c {
            gx.plane_mut(n, c).fill(gy.at(n, c, 0, 0) * inv);
        }
    }
    Ok(gx)
}

/// Numerically-stable softmax over a contiguous slice, in place.
pub fn softmax_slice<T: Scalar>(v: &mut [T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::shape("softmax", "empty input"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { op: "softmax" });
    }
    let mut maxv = v[0];
    for &x in v.iter().skip(1) {
        if x > maxv {
            maxv = x;
        }
    }
    let mut den = T::zero();
    for x in v.iter_mut() {
        *x = (*x - maxv).exp();
        den += *x;
    }
    for x in v.iter_mut() {
        *x = *x / den;
    }
    Ok(())
}

fn level_width(s: Shape, levels: usize) -> Result<usize> {
    if levels == 0 || !s.c.is_multiple_of(levels) {
        return Err(Error::shape(
            "softmax_levels",
            format!("{} channels not divisible into {} levels", s.c, levels),
        ));
    }
    if s.h != 1 || s.w != 1 {
        return Err(Error::shape(
            "softmax_levels",
            format!("expected (N,M·C,1,1), got {s}"),
        ));
    }
    Ok(s.c / levels)
}

/// Input is M stacked per-level feature vectors, shape (N, M·C, 1, 1).
/// For every (sample, channel j) the M entries `x[n, i·C+j]` are replaced
/// by their softmax, so each channel's level weights form a probability
/// vector.
pub fn softmax_levels<T: Scalar>(x: &TensorBase<T>, levels: usize) -> Result<TensorBase<T>> {
    let s = x.shape();
    let c = level_width(s, levels)?;
    let mut y = x.clone();
    let mut lane = vec![T::zero(); levels];
    for n in 0..s.n {
        let row = &mut y.data_mut()[n * s.c..(n + 1) * s.c];
        for j in 0..c {
            for i in 0..levels {
                lane[i] = row[i * c + j];
            }
            softmax_slice(&mut lane)?;
            for i in 0..levels {
                row[i * c + j] = lane[i];
            }
        }
    }
    Ok(y)
}

/// Backward pass of [`softmax_levels`] given the forward output `y`:
/// `gx_i = y_i·(gy_i − Σ_k gy_k·y_k)` within each (sample, channel) group.
pub fn softmax_levels_backward<T: Scalar>(
    y: &TensorBase<T>,
    gy: &TensorBase<T>,
    levels: usize,
) -> Result<TensorBase<T>> {
    let s = y.shape();
    let c = level_width(s, levels)?;
    if gy.shape() != s {
        return Err(Error::shape(
            "softmax_levels",
            format!("upstream gradient {} does not match output {s}", gy.shape()),
        ));
    }
    let mut gx = TensorBase::zeros(s);
    for n in 0..s.n {
        let yrow = &y.data()[n * s.c..(n + 1) * s.c];
        let grow = &gy.data()[n * s.c..(n + 1) * s.c];
        let out = &mut gx.data_mut()[n * s.c..(n + 1) * s.c];
        for j in 0..c {
            let mut inner = T::zero();
            for i in 0..levels {
                inner += grow[i * c + j] * yrow[i * c + j];
            }
            for i in 0..levels {
                let k = i * c + j;
                out[k] = yrow[k] * (grow[k] - inner);
            }
        }
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_of_constant_is_the_constant() {
        let x = TensorBase::filled(Shape::new(1, 1, 3, 5), 7.0f32);
        assert_eq!(global_avg_pool(&x).unwrap().data()[0], 7.0);
    }

    #[test]
    fn pool_of_2x2_is_hand_mean() {
        let x = TensorBase::from_vec(Shape::new(1, 1, 2, 2), vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data()[0], 2.5);
    }

    #[test]
    fn pool_backward_spreads_evenly() {
        let gy = TensorBase::from_vec(Shape::new(1, 1, 1, 1), vec![8.0f32]).unwrap();
        let gx = global_avg_pool_backward(Shape::new(1, 1, 2, 2), &gy).unwrap();
        assert_eq!(gx.data(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut v = [0.0f32; 3];
        softmax_slice(&mut v).unwrap();
        for x in v {
            assert!((x - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_survives_large_inputs() {
        let mut v = [1000.0f32, 1000.0];
        softmax_slice(&mut v).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-7);
        assert!((v[1] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn softmax_is_a_shift_invariant_probability_vector() {
        let base = [0.3f64, -1.2, 2.7, 0.0, 0.9];
        for shift in [-100.0, -0.5, 0.0, 3.0, 250.0] {
            let mut v = base;
            for x in &mut v {
                *x += shift;
            }
            softmax_slice(&mut v).unwrap();
            let mut reference = base;
            softmax_slice(&mut reference).unwrap();
            let sum: f64 = v.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "sum {sum} at shift {shift}");
            for (a, b) in v.iter().zip(&reference) {
                assert!(*a > 0.0 && *a < 1.0);
                assert!((a - b).abs() < 1e-6, "shift {shift} changed softmax");
            }
        }
    }

    #[test]
    fn softmax_of_log_integers() {
        let mut v = [1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()];
        softmax_slice(&mut v).unwrap();
        assert!((v[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((v[1] - 2.0 / 6.0).abs() < 1e-12);
        assert!((v[2] - 3.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_nan() {
        let mut v = [f32::NAN, 0.0];
        assert!(softmax_slice(&mut v).is_err());
    }

    #[test]
    fn level_softmax_normalizes_each_channel() {
        // Two levels, three channels: each (channel) pair must sum to 1.
        let x = TensorBase::from_vec(
            Shape::new(1, 6, 1, 1),
            vec![0.1f32, -2.0, 3.0, 0.4, 1.0, -1.0],
        )
        .unwrap();
        let y = softmax_levels(&x, 2).unwrap();
        for j in 0..3 {
            let total = y.data()[j] + y.data()[3 + j];
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn level_softmax_backward_matches_finite_differences() {
        let x = TensorBase::from_vec(
            Shape::new(1, 6, 1, 1),
            vec![0.1f64, -0.2, 0.3, 0.4, -0.5, 0.6],
        )
        .unwrap();
        // Loss = Σ w·y with fixed weights to break symmetry.
        let weights: Vec<f64> = (0..6).map(|i| (i as f64 + 1.0) * 0.1).collect();
        let loss = |input: &TensorBase<f64>| -> f64 {
            let y = softmax_levels(input, 2).unwrap();
            y.data().iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let y = softmax_levels(&x, 2).unwrap();
        let gy = TensorBase::from_vec(y.shape(), weights.clone()).unwrap();
        let gx = softmax_levels_backward(&y, &gy, 2).unwrap();
        let h = 1e-6;
        for i in 0..x.numel() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!(
                (gx.data()[i] - fd).abs() < 1e-8,
                "elem {i}: {} vs {fd}",
                gx.data()[i]
            );
        }
    }
}
