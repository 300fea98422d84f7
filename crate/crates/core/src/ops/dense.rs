//! Fully-connected layer on per-sample channel vectors.
//!
//! Inputs are (N, C, 1, 1) tensors — the pooled features inside the fusion
//! module — and weights are (C_out, C_in, 1, 1).

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::ops::dot;
use crate::tensor::{Shape, TensorBase};

fn check_vec_shape<T: Scalar>(x: &TensorBase<T>, what: &str) -> Result<Shape> {
    let s = x.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::shape(
            "dense",
            format!("{what} must be (N,C,1,1), got {s}"),
        ));
    }
    Ok(s)
}

/// `y[n] = w · x[n] (+ b)` with `w` of shape (out, in, 1, 1).
pub fn dense<T: Scalar>(
    x: &TensorBase<T>,
    w: &TensorBase<T>,
    b: Option<&[T]>,
) -> Result<TensorBase<T>> {
    let xs = check_vec_shape(x, "input")?;
    let ws = w.shape();
    if ws.h != 1 || ws.w != 1 || ws.c != xs.c {
        return Err(Error::shape(
            "dense",
            format!("weight {ws} incompatible with input {xs}"),
        ));
    }
    if let Some(bv) = b {
        if bv.len() != ws.n {
            return Err(Error::shape(
                "dense",
                format!("bias length {} != out features {}", bv.len(), ws.n),
            ));
        }
    }
    let (out_f, in_f) = (ws.n, ws.c);
    let mut y = TensorBase::zeros(Shape::new(xs.n, out_f, 1, 1));
    for n in 0..xs.n {
        let xrow = &x.data()[n * in_f..(n + 1) * in_f];
        let yrow = &mut y.data_mut()[n * out_f..(n + 1) * out_f];
        for (o, yv) in yrow.iter_mut().enumerate() {
            let mut acc = dot(&w.data()[o * in_f..(o + 1) * in_f], xrow);
            if let Some(bv) = b {
                acc += bv[o];
            }
            *yv = acc;
        }
    }
    Ok(y)
}

/// Gradients returned by [`dense_backward`]: (gx, gw, gb).
pub type DenseGrads<T> = (TensorBase<T>, TensorBase<T>, Option<Vec<T>>);

/// Backward pass of [`dense`]: returns (gx, gw, gb); `gb` is `Some` when
/// `has_bias` is set.
pub fn dense_backward<T: Scalar>(
    x: &TensorBase<T>,
    w: &TensorBase<T>,
    gy: &TensorBase<T>,
    has_bias: bool,
) -> Result<DenseGrads<T>> {
    let xs = check_vec_shape(x, "input")?;
    let ws = w.shape();
    let gys = check_vec_shape(gy, "upstream gradient")?;
    if gys.n != xs.n || gys.c != ws.n {
        return Err(Error::shape(
            "dense",
            format!("upstream gradient {gys} incompatible with weight {ws}"),
        ));
    }
    let (out_f, in_f) = (ws.n, ws.c);
    let mut gx = TensorBase::zeros(xs);
    let mut gw = TensorBase::zeros(ws);
    let mut gb = has_bias.then(|| vec![T::zero(); out_f]);
    for n in 0..xs.n {
        let xrow = &x.data()[n * in_f..(n + 1) * in_f];
        let gyrow = &gy.data()[n * out_f..(n + 1) * out_f];
        for o in 0..out_f {
            let g = gyrow[o];
            let wrow = &w.data()[o * in_f..(o + 1) * in_f];
            let gxrow = &mut gx.data_mut()[n * in_f..(n + 1) * in_f];
            for (gxv, &wv) in gxrow.iter_mut().zip(wrow) {
                *gxv += g * wv;
            }
            let gwrow = &mut gw.data_mut()[o * in_f..(o + 1) * in_f];
            for (gwv, &xv) in gwrow.iter_mut().zip(xrow) {
                *gwv += g * xv;
            }
            if let Some(gb) = gb.as_mut() {
                gb[o] += g;
            }
        }
    }
    Ok((gx, gw, gb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_passes_through() {
        let x = TensorBase::from_vec(Shape::new(1, 3, 1, 1), vec![2.0f32, -1.0, 0.5]).unwrap();
        let mut w = TensorBase::zeros(Shape::new(3, 3, 1, 1));
        for i in 0..3 {
            *w.at_mut(i, i, 0, 0) = 1.0;
        }
        let y = dense(&x, &w, None).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn hand_arithmetic_example() {
        // [[1,1],[0,2]] · [3,4] = [7,8]
        let x = TensorBase::from_vec(Shape::new(1, 2, 1, 1), vec![3.0f32, 4.0]).unwrap();
        let w = TensorBase::from_vec(Shape::new(2, 2, 1, 1), vec![1.0, 1.0, 0.0, 2.0]).unwrap();
        let y = dense(&x, &w, None).unwrap();
        assert_eq!(y.data(), &[7.0, 8.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Loss = sum of outputs → gy = ones; check dL/dw against central
        // differences with step 1e-3 and relative error below 1e-3.
        let x = TensorBase::from_vec(Shape::new(2, 3, 1, 1), vec![0.3f64, -0.7, 1.1, 0.9, 0.2, -0.4])
            .unwrap();
        let w = TensorBase::from_vec(
            Shape::new(2, 3, 1, 1),
            vec![0.5, -0.25, 0.75, -0.1, 0.6, 0.2],
        )
        .unwrap();
        let gy = TensorBase::filled(Shape::new(2, 2, 1, 1), 1.0f64);
        let (_, gw, _) = dense_backward(&x, &w, &gy, false).unwrap();
        let h = 1e-3;
        for i in 0..w.numel() {
            let mut wp = w.clone();
            wp.data_mut()[i] += h;
            let mut wm = w.clone();
            wm.data_mut()[i] -= h;
            let up: f64 = dense(&x, &wp, None).unwrap().data().iter().sum();
            let down: f64 = dense(&x, &wm, None).unwrap().data().iter().sum();
            let fd = (up - down) / (2.0 * h);
            let an = gw.data()[i];
            assert!((an - fd).abs() / fd.abs().max(1.0) < 1e-3, "elem {i}: {an} vs {fd}");
        }
    }

    #[test]
    fn bias_adds_and_accumulates_gradient() {
        let x = TensorBase::from_vec(Shape::new(1, 2, 1, 1), vec![3.0f32, 4.0]).unwrap();
        let w = TensorBase::from_vec(Shape::new(2, 2, 1, 1), vec![1.0, 1.0, 0.0, 2.0]).unwrap();
        let y = dense(&x, &w, Some(&[10.0, 20.0])).unwrap();
        assert_eq!(y.data(), &[17.0, 28.0]);
        let gy = TensorBase::filled(Shape::new(1, 2, 1, 1), 1.0f32);
        let (_, _, gb) = dense_backward(&x, &w, &gy, true).unwrap();
        assert_eq!(gb.unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_spatial_input() {
        let x = TensorBase::zeros(Shape::new(1, 2, 2, 2));
        let w = TensorBase::zeros(Shape::new(2, 2, 1, 1));
        assert!(dense::<f32>(&x, &w, None).is_err());
    }
}
