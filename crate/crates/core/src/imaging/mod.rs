//! Image handling: planar float images, PNG I/O, antialiased bicubic
//! resampling, luma conversion, evaluation metrics, and the eight dihedral
//! augmentation transforms.

pub mod metrics;
pub mod png;
pub mod resize;
pub mod transform;

use crate::error::{Error, Result};
use crate::tensor::{Shape, TensorBase};

/// Declared value semantics of an [`ImagePlane`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    /// Three channels, full range [0,1].
    Rgb,
    /// Single luma channel, studio swing: nominal range [16/255, 235/255],
    /// stored within [0,1].
    LumaY,
}

/// A 2-D float image, planar channel-major layout (all of channel 0, then
/// channel 1, ...). Values live in [0,1]; every transform in this module
/// clamps its output back into that range.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    channels: usize,
    colorspace: ColorSpace,
    data: Vec<f32>,
}

impl ImagePlane {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        colorspace: ColorSpace,
        data: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image(format!(
                "image extents must be positive (got {width}×{height})"
            )));
        }
        if !matches!(channels, 1 | 3) {
            return Err(Error::Image(format!(
                "channel count must be 1 or 3 (got {channels})"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Image(format!(
                "data length {} does not match {width}×{height}×{channels}",
                data.len()
            )));
        }
        Ok(ImagePlane {
            width,
            height,
            channels,
            colorspace,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize, colorspace: ColorSpace) -> Self {
        ImagePlane {
            width,
            height,
            channels,
            colorspace,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f32 {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    /// Clamps every value into [0,1] in place.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Rounds every value to the nearest 8-bit level (v → round(v·255)/255).
    /// Metrics are computed on quantized data, matching how saved outputs
    /// would be scored.
    pub fn quantize8(&self) -> ImagePlane {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = (*v * 255.0).round().clamp(0.0, 255.0) / 255.0;
        }
        out
    }

    /// Converts to a (1, C, H, W) tensor.
    pub fn to_tensor(&self) -> TensorBase<f32> {
        let shape = Shape::new(1, self.channels, self.height, self.width);
        TensorBase::from_vec(shape, self.data.clone()).expect("image/tensor layouts agree")
    }

    /// Converts a single-image (N = 1) tensor back, clamping into [0,1].
    pub fn from_tensor(t: &TensorBase<f32>, colorspace: ColorSpace) -> Result<Self> {
        let s = t.shape();
        if s.n != 1 {
            return Err(Error::Image(format!(
                "expected a single-image tensor, got batch of {}",
                s.n
            )));
        }
        let mut img = ImagePlane::new(s.w, s.h, s.c, colorspace, t.data().to_vec())?;
        img.clamp_unit();
        Ok(img)
    }

    /// Extracts the BT.601 studio-swing luma channel:
    /// Y' = (16 + 65.481·R + 128.553·G + 24.966·B) / 255.
    pub fn luma(&self) -> Result<ImagePlane> {
        if self.channels != 3 || self.colorspace != ColorSpace::Rgb {
            return Err(Error::Image(
                "luma conversion needs a 3-channel RGB image".to_string(),
            ));
        }
        let hw = self.height * self.width;
        let (r, rest) = self.data.split_at(hw);
        let (g, b) = rest.split_at(hw);
        let mut y = Vec::with_capacity(hw);
        for i in 0..hw {
            let v = (16.0 + 65.481 * r[i] as f64 + 128.553 * g[i] as f64 + 24.966 * b[i] as f64)
                / 255.0;
            y.push(v.clamp(0.0, 1.0) as f32);
        }
        ImagePlane::new(self.width, self.height, 1, ColorSpace::LumaY, y)
    }

    /// Crops a rectangle (x0, y0, width, height).
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<ImagePlane> {
        if x0 + width > self.width || y0 + height > self.height || width == 0 || height == 0 {
            return Err(Error::Image(format!(
                "crop {width}×{height}+{x0}+{y0} exceeds {}×{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * self.channels);
        for c in 0..self.channels {
            for y in y0..y0 + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
            }
        }
        ImagePlane::new(width, height, self.channels, self.colorspace, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(width: usize, height: usize, rgb: [f32; 3]) -> ImagePlane {
        let hw = width * height;
        let mut data = Vec::with_capacity(3 * hw);
        for c in rgb {
            data.extend(std::iter::repeat_n(c, hw));
        }
        ImagePlane::new(width, height, 3, ColorSpace::Rgb, data).unwrap()
    }

    #[test]
    fn luma_closed_forms() {
        let white = rgb(2, 2, [1.0, 1.0, 1.0]).luma().unwrap();
        let black = rgb(2, 2, [0.0, 0.0, 0.0]).luma().unwrap();
        let gray = rgb(2, 2, [0.5, 0.5, 0.5]).luma().unwrap();
        for v in white.data() {
            assert!((v - 235.0 / 255.0).abs() < 1e-6);
        }
        for v in black.data() {
            assert!((v - 16.0 / 255.0).abs() < 1e-6);
        }
        for v in gray.data() {
            assert!((v - 125.5 / 255.0).abs() < 1e-6);
        }
    }

    #[test]
    fn luma_rejects_single_channel() {
        let y = ImagePlane::zeros(2, 2, 1, ColorSpace::LumaY);
        assert!(y.luma().is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let mut img = ImagePlane::zeros(3, 2, 3, ColorSpace::Rgb);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = i as f32 / 18.0;
        }
        let t = img.to_tensor();
        assert_eq!(t.shape(), Shape::new(1, 3, 2, 3));
        let back = ImagePlane::from_tensor(&t, ColorSpace::Rgb).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn from_tensor_clamps() {
        let t = TensorBase::from_vec(Shape::new(1, 1, 1, 3), vec![-0.5f32, 0.5, 1.5]).unwrap();
        let img = ImagePlane::from_tensor(&t, ColorSpace::LumaY).unwrap();
        assert_eq!(img.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn quantize_rounds_to_8bit_levels() {
        let t = TensorBase::from_vec(
            Shape::new(1, 1, 1, 3),
            vec![0.5f32, 128.0 / 255.0, 0.001],
        )
        .unwrap();
        let img = ImagePlane::from_tensor(&t, ColorSpace::LumaY).unwrap();
        let q = img.quantize8();
        assert_eq!(q.data()[0], 128.0 / 255.0); // 0.5·255 = 127.5 rounds up
        assert_eq!(q.data()[1], 128.0 / 255.0);
        assert_eq!(q.data()[2], 0.0);
    }

    #[test]
    fn crop_extracts_rectangle() {
        let mut img = ImagePlane::zeros(4, 3, 1, ColorSpace::LumaY);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = i as f32;
        }
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
        assert!(img.crop(3, 0, 2, 1).is_err());
    }

    #[test]
    fn constructor_validates() {
        assert!(ImagePlane::new(0, 1, 1, ColorSpace::LumaY, vec![]).is_err());
        assert!(ImagePlane::new(1, 1, 2, ColorSpace::Rgb, vec![0.0; 2]).is_err());
        assert!(ImagePlane::new(2, 2, 1, ColorSpace::LumaY, vec![0.0; 3]).is_err());
    }
}
