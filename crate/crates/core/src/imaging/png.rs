//! PNG load/save. Accepts 8- and 16-bit grayscale and RGB files; saves at
//! 8 bits (values quantized by round-to-nearest), always in PNG format.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};
use crate::imaging::{ColorSpace, ImagePlane};

/// Loads an 8/16-bit grayscale or RGB PNG, scaling values to [0,1].
pub fn load_png(path: &Path) -> Result<ImagePlane> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let reader = ImageReader::with_format(BufReader::new(file), ImageFormat::Png);
    let decoded = reader
        .decode()
        .map_err(|e| Error::Image(format!("decode {}: {e}", path.display())))?;

    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, data): (usize, Vec<f32>) = match decoded {
        DynamicImage::ImageLuma8(buf) => {
            (1, buf.into_raw().iter().map(|&v| v as f32 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(buf) => (
            1,
            buf.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
        ),
        DynamicImage::ImageRgb8(buf) => (3, interleaved_to_planar(buf.as_raw(), 255.0)),
        DynamicImage::ImageRgb16(buf) => (3, interleaved_to_planar(buf.as_raw(), 65535.0)),
        other => {
            return Err(Error::Image(format!(
                "{}: unsupported pixel format {:?}; expected 8/16-bit gray or RGB",
                path.display(),
                other.color()
            )));
        }
    };
    let colorspace = if channels == 1 {
        ColorSpace::LumaY
    } else {
        ColorSpace::Rgb
    };
    ImagePlane::new(width, height, channels, colorspace, data)
}

fn interleaved_to_planar<S: Copy + Into<f64>>(raw: &[S], max: f32) -> Vec<f32> {
    let pixels = raw.len() / 3;
    let mut out = vec![0.0f32; raw.len()];
    for i in 0..pixels {
        for c in 0..3 {
            let v: f64 = raw[i * 3 + c].into();
            out[c * pixels + i] = v as f32 / max;
        }
    }
    out
}

fn to_byte(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Saves as an 8-bit PNG (grayscale or RGB per the image's channel count).
pub fn save_png(img: &ImagePlane, path: &Path) -> Result<()> {
    let file =
        File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut out = BufWriter::new(file);
    let (w, h) = (img.width() as u32, img.height() as u32);
    let result = match img.channels() {
        1 => {
            let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
                ImageBuffer::from_fn(w, h, |x, y| Luma([to_byte(img.at(0, y as usize, x as usize))]));
            DynamicImage::ImageLuma8(buf).write_to(&mut out, ImageFormat::Png)
        }
        _ => {
            let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(w, h, |x, y| {
                Rgb([
                    to_byte(img.at(0, y as usize, x as usize)),
                    to_byte(img.at(1, y as usize, x as usize)),
                    to_byte(img.at(2, y as usize, x as usize)),
                ])
            });
            DynamicImage::ImageRgb8(buf).write_to(&mut out, ImageFormat::Png)
        }
    };
    result.map_err(|e| Error::Image(format!("encode {}: {e}", path.display())))
}
