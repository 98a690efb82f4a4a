use std::path::Path;

use crate::error::{Error, Result};

/// Foreground/background bitmap; `true` marks the walking person.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

/// Inclusive bounding box `(min_x, min_y, max_x, max_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> usize {
        self.max_y - self.min_y + 1
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}×{height} mask needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut bb: Option<BBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let b = bb.get_or_insert(BBox {
                        min_x: x,
                        min_y: y,
                        max_x: x,
                        max_y: y,
                    });
                    b.min_x = b.min_x.min(x);
                    b.max_x = b.max_x.max(x);
                    b.max_y = y;
                }
            }
        }
        bb
    }

    /// Column of the foreground centroid.
    pub fn centroid_x(&self) -> Option<f64> {
        let mut sum = 0f64;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sum += x as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    pub fn intersection_over_union(&self, other: &BinaryMask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// 0.0 / 1.0 per pixel.
    pub fn to_f32(&self) -> Vec<f32> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Writes an 8-bit grayscale PNG with 0 / 255 pixels.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let px = self.bits.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, px)
            .expect("dimensions")
            .save(path.as_ref())?;
        Ok(())
    }

    /// Reads a grayscale PNG; pixels ≥ 128 are foreground.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_luma8();
        Ok(Self::from_luma(&img))
    }

    pub fn from_luma(img: &image::GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let bits = img.as_raw().iter().map(|&v| v >= 128).collect();
        Self {
            width: w as usize,
            height: h as usize,
            bits,
        }
    }
}
