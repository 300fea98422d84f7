//! Dense NCHW tensors and convolution descriptors.

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Extents of a 4-D tensor in NCHW order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Flat row-major offset of `(n, c, h, w)`.
    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

/// Dense 4-D tensor, row-major NCHW.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorBase<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> TensorBase<T> {
    pub fn zeros(shape: Shape) -> Self {
        TensorBase {
            shape,
            data: vec![T::zero(); shape.numel()],
        }
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        TensorBase {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    /// Builds a tensor from flat row-major data; the length must match.
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::shape(
                "tensor",
                format!("data length {} != shape {} numel {}", data.len(), shape, shape.numel()),
            ));
        }
        Ok(TensorBase { shape, data })
    }

    /// Scalar tensor `(1,1,1,1)`.
    pub fn scalar(value: T) -> Self {
        TensorBase {
            shape: Shape::new(1, 1, 1, 1),
            data: vec![value],
        }
    }

    /// Per-channel vector laid out as `(1, c, 1, 1)`.
    pub fn channel_vec(values: Vec<T>) -> Self {
        let c = values.len();
        TensorBase {
            shape: Shape::new(1, c, 1, 1),
            data: values,
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.index(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut T {
        &mut self.data[self.shape.index(n, c, h, w)]
    }

    /// The `(h, w)` plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &self.data[start..start + hw]
    }

    /// Mutable `(h, w)` plane of sample `n`, channel `c`.
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fails with [`Error::NonFinite`] if any element is NaN/Inf.
    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> TensorBase<U> {
        TensorBase {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Widens/narrows the element type (f32 <-> f64 shadow evaluation).
    pub fn cast<U: Scalar>(&self) -> TensorBase<U> {
        self.map(|v| U::from_f64(v.to_f64()))
    }
}

/// Descriptor of a grouped 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Standard dense convolution (groups = 1) with "same" padding for odd
    /// kernels when `padding = k/2` is passed by the caller.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: 1,
            padding,
            groups: 1,
            bias: true,
        }
    }

    pub fn depthwise(channels: usize, kernel: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel: (kernel, kernel),
            stride: 1,
            padding,
            groups: channels,
            bias: true,
        }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups == self.out_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.out_channels == 0
            || self.kernel.0 == 0
            || self.kernel.1 == 0
            || self.stride == 0
            || self.groups == 0
        {
            return Err(Error::shape("conv2d", "zero extent in spec"));
        }
        if !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "groups {} must divide in_channels {} and out_channels {}",
                    self.groups, self.in_channels, self.out_channels
                ),
            ));
        }
        Ok(())
    }

    /// Expected weight shape `(out, in/groups, kh, kw)`.
    pub fn weight_shape(&self) -> Shape {
        Shape::new(
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel.0,
            self.kernel.1,
        )
    }

    /// Output spatial extents for an input `(h, w)`.
    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let he = h + 2 * self.padding;
        let we = w + 2 * self.padding;
        if he < kh || we < kw {
            return Err(Error::shape(
                "conv2d",
                format!("input {}x{} smaller than kernel {}x{} after padding", h, w, kh, kw),
            ));
        }
        Ok(((he - kh) / self.stride + 1, (we - kw) / self.stride + 1))
    }

    /// Weight element count (excluding bias).
    pub fn weight_params(&self) -> usize {
        self.weight_shape().numel()
    }

    /// Multiply-accumulate count for one image at output extents `(h, w)`.
    pub fn mult_adds(&self, out_h: usize, out_w: usize) -> u64 {
        let per_pixel = self.kernel.0 * self.kernel.1 * (self.in_channels / self.groups) * self.out_channels;
        per_pixel as u64 * out_h as u64 * out_w as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_length_mismatch() {
        let err = TensorBase::<f32>::from_vec(Shape::new(1, 2, 2, 2), vec![0.0; 7]);
        assert!(err.is_err());
    }

    #[test]
    fn index_is_row_major() {
        let s = Shape::new(2, 3, 4, 5);
        assert_eq!(s.index(0, 0, 0, 0), 0);
        assert_eq!(s.index(0, 0, 0, 1), 1);
        assert_eq!(s.index(0, 0, 1, 0), 5);
        assert_eq!(s.index(0, 1, 0, 0), 20);
        assert_eq!(s.index(1, 0, 0, 0), 60);
    }

    #[test]
    fn conv_spec_divisibility() {
        let spec = ConvSpec::new(6, 4, 3, 1).with_groups(4);
        assert!(spec.validate().is_err());
        let ok = ConvSpec::new(8, 4, 3, 1).with_groups(4);
        assert!(ok.validate().is_ok());
        assert!(ConvSpec::depthwise(16, 3, 1).is_depthwise());
    }

    #[test]
    fn conv_out_shape() {
        let spec = ConvSpec::new(3, 8, 3, 1);
        assert_eq!(spec.out_hw(32, 32).unwrap(), (32, 32));
        let spec1 = ConvSpec::new(3, 8, 1, 0);
        assert_eq!(spec1.out_hw(32, 32).unwrap(), (32, 32));
    }

    #[test]
    fn ensure_finite_flags_nan() {
        let t = TensorBase::<f32>::from_vec(Shape::new(1, 1, 1, 2), vec![1.0, f32::NAN]).unwrap();
        assert!(t.ensure_finite("test").is_err());
    }
}
