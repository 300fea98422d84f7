//! Independent oracles used to validate the numeric kernels.
//!
//! Everything here is written deliberately naively — straight loops over
//! the mathematical definitions — and never calls into the optimized
//! kernels it is meant to check. Both the test suite and the `selftest`
//! command run against these.
//!
//! Plain index loops are the point here, so the iterator-style lint is
//! off for the whole module.
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::tensor::{ConvSpec, Shape, TensorBase};

/// Direct cross-correlation by seven nested loops. Zero padding, grouped.
pub fn conv2d_loop<T: Scalar>(
    x: &TensorBase<T>,
    w: &TensorBase<T>,
    bias: Option<&[T]>,
    spec: &ConvSpec,
) -> Result<TensorBase<T>> {
    spec.validate()?;
    let xs = x.shape();
    let (out_h, out_w) = spec.out_hw(xs.h, xs.w)?;
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let mut y = TensorBase::zeros(Shape::new(xs.n, spec.out_channels, out_h, out_w));
    for n in 0..xs.n {
        for g in 0..spec.groups {
            for ocg in 0..cout_g {
                let oc = g * cout_g + ocg;
                for oh in 0..out_h {
                    for ow in 0..out_w {
                        let mut acc = T::zero();
                        for icg in 0..cin_g {
                            let ic = g * cin_g + icg;
                            for kh in 0..spec.kernel.0 {
                                for kw in 0..spec.kernel.1 {
                                    let ih = oh * spec.stride + kh;
                                    let iw = ow * spec.stride + kw;
                                    if ih < spec.padding || iw < spec.padding {
                                        continue;
                                    }
                                    let ih = ih - spec.padding;
                                    let iw = iw - spec.padding;
                                    if ih >= xs.h || iw >= xs.w {
                                        continue;
                                    }
                                    acc += x.at(n, ic, ih, iw) * w.at(oc, icg, kh, kw);
                                }
                            }
                        }
                        if let Some(b) = bias {
                            acc += b[oc];
                        }
                        *y.at_mut(n, oc, oh, ow) = acc;
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Depthwise convolution as C independent single-channel convolutions,
/// stacked back together.
pub fn depthwise_loop<T: Scalar>(
    x: &TensorBase<T>,
    w: &TensorBase<T>,
    bias: Option<&[T]>,
    spec: &ConvSpec,
) -> Result<TensorBase<T>> {
    let xs = x.shape();
    let (out_h, out_w) = spec.out_hw(xs.h, xs.w)?;
    let mut y = TensorBase::zeros(Shape::new(xs.n, spec.out_channels, out_h, out_w));
    let single = ConvSpec {
        in_channels: 1,
        out_channels: 1,
        groups: 1,
        bias: false,
        ..*spec
    };
    for c in 0..xs.c {
        // Lift channel c into its own 1-channel tensor.
        let mut xc = TensorBase::zeros(Shape::new(xs.n, 1, xs.h, xs.w));
        for n in 0..xs.n {
            let dst_base = n * xs.h * xs.w;
            xc.data_mut()[dst_base..dst_base + xs.h * xs.w].copy_from_slice(x.plane(n, c));
        }
        let mut wc = TensorBase::zeros(Shape::new(1, 1, spec.kernel.0, spec.kernel.1));
        for kh in 0..spec.kernel.0 {
            for kw in 0..spec.kernel.1 {
                *wc.at_mut(0, 0, kh, kw) = w.at(c, 0, kh, kw);
            }
        }
        let yc = conv2d_loop(&xc, &wc, None, &single)?;
        for n in 0..xs.n {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let mut v = yc.at(n, 0, oh, ow);
                    if let Some(b) = bias {
                        v += b[c];
                    }
                    *y.at_mut(n, c, oh, ow) = v;
                }
            }
        }
    }
    Ok(y)
}

/// Softmax feature fusion by scalar loops: per channel j, weights are the
/// softmax across levels of the dense-transformed pooled features, and the
/// output is the per-position convex combination.
pub fn sffm_loop<T: Scalar>(levels: &[TensorBase<T>], alphas: &[TensorBase<T>]) -> Result<TensorBase<T>> {
    if levels.is_empty() || levels.len() != alphas.len() {
        return Err(Error::shape("sffm", "level/alpha count mismatch"));
    }
    let s = levels[0].shape();
    let m = levels.len();
    let c = s.c;
    let mut out = TensorBase::zeros(s);
    for n in 0..s.n {
        // x[i][j] = mean of level i channel j
        let mut pooled = vec![vec![T::zero(); c]; m];
        for (i, level) in levels.iter().enumerate() {
            for j in 0..c {
                let mut sum = T::zero();
                for &v in level.plane(n, j) {
                    sum += v;
                }
                pooled[i][j] = sum / T::from_usize(s.h * s.w);
            }
        }
        // y[i][j] = alpha_i row j . pooled_i
        let mut scores = vec![vec![T::zero(); c]; m];
        for i in 0..m {
            let a = &alphas[i];
            for j in 0..c {
                let mut acc = T::zero();
                for k in 0..c {
                    acc += a.at(j, k, 0, 0) * pooled[i][k];
                }
                scores[i][j] = acc;
            }
        }
        // per channel j: w[.][j] = softmax over levels; r_j = sum w m
        for j in 0..c {
            let mut maxv = scores[0][j];
            for i in 1..m {
                if scores[i][j] > maxv {
                    maxv = scores[i][j];
                }
            }
            let mut den = T::zero();
            let mut e = vec![T::zero(); m];
            for i in 0..m {
                e[i] = (scores[i][j] - maxv).exp();
                den += e[i];
            }
            for hw in 0..s.h * s.w {
                let mut acc = T::zero();
                for (i, level) in levels.iter().enumerate() {
                    acc += e[i] / den * level.plane(n, j)[hw];
                }
                out.plane_mut(n, j)[hw] = acc;
            }
        }
    }
    Ok(out)
}

/// Result of a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub checked: usize,
    pub max_err: f64,
    pub worst: Option<(usize, f64, f64)>,
}

impl GradCheck {
    pub fn ok(&self, tol: f64) -> bool {
        self.max_err <= tol
    }
}

/// Compares an analytic gradient against central finite differences of
/// `loss_of`, perturbing the elements listed in `indices` of a parameter
/// vector. The error metric is `|a - f| / max(1, |a|, |f|)`, which behaves
/// like a relative error for large gradients and an absolute one near zero.
pub fn finite_diff<T, F>(
    param: &mut [T],
    analytic: &[T],
    indices: &[usize],
    step: f64,
    mut loss_of: F,
) -> Result<GradCheck>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<T>,
{
    let h = T::from_f64(step);
    let mut max_err = 0.0f64;
    let mut worst = None;
    for &i in indices {
        let saved = param[i];
        param[i] = saved + h;
        let up = loss_of(param)?.to_f64();
        param[i] = saved - h;
        let down = loss_of(param)?.to_f64();
        param[i] = saved;
        let fd = (up - down) / (2.0 * step);
        let an = analytic[i].to_f64();
        let err = (an - fd).abs() / 1.0f64.max(an.abs()).max(fd.abs());
        if err > max_err {
            max_err = err;
            worst = Some((i, an, fd));
        }
    }
    Ok(GradCheck {
        checked: indices.len(),
        max_err,
        worst,
    })
}

/// Deterministic low-state PRNG for oracle data (SplitMix64); keeps the
/// check module free of the main RNG stack.
pub struct OracleRng(u64);

impl OracleRng {
    pub fn new(seed: u64) -> Self {
        OracleRng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [lo, hi).
    pub fn uniform<T: Scalar>(&mut self, lo: f64, hi: f64) -> T {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        T::from_f64(lo + u * (hi - lo))
    }

    pub fn tensor<T: Scalar>(&mut self, shape: Shape, lo: f64, hi: f64) -> TensorBase<T> {
        let data = (0..shape.numel()).map(|_| self.uniform(lo, hi)).collect();
        TensorBase::from_vec(shape, data).expect("shape/data agree")
    }

    pub fn indices(&mut self, len: usize, count: usize) -> Vec<usize> {
        if len <= count {
            return (0..len).collect();
        }
        let mut out: Vec<usize> = (0..count).map(|_| (self.next_u64() % len as u64) as usize).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

