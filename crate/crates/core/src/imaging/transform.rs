//! The eight dihedral transforms (rotations by 0/90/180/270 degrees, each
//! optionally mirrored) used for training-set augmentation.

use crate::imaging::ImagePlane;

/// Number of distinct dihedral transforms.
pub const DIHEDRAL_COUNT: usize = 8;

fn rotate90(img: &ImagePlane) -> ImagePlane {
    // (y, x) → (x, H−1−y): the first row becomes the last column.
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = ImagePlane::zeros(h, w, c, img.colorspace());
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                *out.at_mut(ch, x, h - 1 - y) = img.at(ch, y, x);
            }
        }
    }
    out
}

fn mirror(img: &ImagePlane) -> ImagePlane {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = ImagePlane::zeros(w, h, c, img.colorspace());
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                *out.at_mut(ch, y, w - 1 - x) = img.at(ch, y, x);
            }
        }
    }
    out
}

/// Applies dihedral transform `k` (0..8): `k % 4` quarter-turns, then a
/// horizontal mirror when `k >= 4`. `k = 0` is the identity.
pub fn dihedral(img: &ImagePlane, k: usize) -> ImagePlane {
    let mut out = img.clone();
    for _ in 0..(k % 4) {
        out = rotate90(&out);
    }
    if (k % DIHEDRAL_COUNT) >= 4 {
        out = mirror(&out);
    }
    out
}
