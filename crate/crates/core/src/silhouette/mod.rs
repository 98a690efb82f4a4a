//! Chroma-key silhouette extraction: an HSV range model of the green screen,
//! per-pixel exclusion, and morphological clean-up.

mod color;
mod mask;
mod morphology;

pub use color::{hsv_to_rgb, rgb_to_hsv, Hsv, HUE_SCALE};
pub use mask::{BBox, BinaryMask};
pub use morphology::{
    components, denoise, dilate, erode, largest_component, Component, DEFAULT_MIN_BLOB_FRACTION,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An 8-bit RGB frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorFrame {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub pixels: Vec<u8>,
    pub index: usize,
}

impl ColorFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, index: usize) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(Error::Shape(format!(
                "{width}×{height} RGB frame needs {} bytes, got {}",
                3 * width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            index,
        })
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn load(path: impl AsRef<Path>, index: usize) -> Result<Self> {
        Self::from_image(image::open(path.as_ref())?, index)
    }

    pub fn from_image(img: image::DynamicImage, index: usize) -> Result<Self> {
        let img = img.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw(), index)
    }

    /// The frame read as a mask, when every pixel is pure black or pure
    /// white.
    pub fn as_binary_mask(&self) -> Option<BinaryMask> {
        let mut bits = Vec::with_capacity(self.width * self.height);
        for p in self.pixels.chunks_exact(3) {
            match p {
                [0, 0, 0] => bits.push(false),
                [255, 255, 255] => bits.push(true),
                _ => return None,
            }
        }
        BinaryMask::from_bits(self.width, self.height, bits).ok()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("length checked at construction");
        img.save(path.as_ref())?;
        Ok(())
    }
}

/// Inclusive `[low, high]` bound on one 8-bit channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub low: u8,
    pub high: u8,
}

impl Range {
    fn contains(self, v: u8, margin: u8) -> bool {
        v >= self.low.saturating_sub(margin) && v <= self.high.saturating_add(margin)
    }

    pub fn width(self) -> u8 {
        self.high - self.low
    }
}

/// Hue arc on the `[0, 180)` circle, running from `low` up to `high`
/// (wrapping through 0 when `low > high`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HueRange {
    pub low: u8,
    pub high: u8,
}

impl HueRange {
    /// Arc length in hue units.
    pub fn width(self) -> u16 {
        (self.high as u16 + HUE_SCALE - self.low as u16) % HUE_SCALE
    }

    fn contains(self, h: u8, margin: u8) -> bool {
        let span = self.width() + 2 * margin as u16;
        if span >= HUE_SCALE {
            return true;
        }
        let start = (self.low as u16 + HUE_SCALE - margin as u16) % HUE_SCALE;
        (h as u16 + HUE_SCALE - start) % HUE_SCALE <= span
    }
}

/// Per-component ranges of the background colour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HsvBackgroundModel {
    pub hue: HueRange,
    pub saturation: Range,
    pub value: Range,
    /// Tolerance added on both sides of every range when classifying.
    pub margin: u8,
}

/// Lower and upper percentiles used for the background ranges.
pub const BACKGROUND_PERCENTILES: (f64, f64) = (0.01, 0.99);
pub const BACKGROUND_MARGIN: u8 = 4;

impl HsvBackgroundModel {
    pub fn is_background(&self, hsv: Hsv) -> bool {
        self.hue.contains(hsv.h, self.margin)
            && self.saturation.contains(hsv.s, self.margin)
            && self.value.contains(hsv.v, self.margin)
    }
}

fn percentile_range(hist: &[u64], total: u64) -> (usize, usize) {
    let (lo_q, hi_q) = BACKGROUND_PERCENTILES;
    let lo_rank = ((lo_q * total as f64).ceil() as u64).max(1);
    let hi_rank = ((hi_q * total as f64).ceil() as u64).max(1);
    let mut cum = 0u64;
    let mut low = None;
    let mut high = hist.len() - 1;
    for (v, &c) in hist.iter().enumerate() {
        cum += c;
        if low.is_none() && cum >= lo_rank {
            low = Some(v);
        }
        if cum >= hi_rank {
            high = v;
            break;
        }
    }
    (low.unwrap_or(0), high)
}

/// Learns the background colour ranges from a frame showing only the
/// background: each HSV component's `[1st, 99th]` percentile. Hue is
/// unwrapped around its circular mean first so a range straddling 0 stays
/// contiguous.
pub fn learn_background(frame: &ColorFrame) -> Result<HsvBackgroundModel> {
    if frame.width == 0 || frame.height == 0 || frame.pixels.is_empty() {
        return Err(Error::Empty("background frame has no pixels".into()));
    }
    let hsv: Vec<Hsv> = frame
        .pixels
        .chunks_exact(3)
        .map(|p| rgb_to_hsv([p[0], p[1], p[2]]))
        .collect();
    let total = hsv.len() as u64;

    let (mut sx, mut sy) = (0f64, 0f64);
    for p in &hsv {
        let a = p.h as f64 / HUE_SCALE as f64 * std::f64::consts::TAU;
        sx += a.cos();
        sy += a.sin();
    }
    let mean_angle = sy.atan2(sx).rem_euclid(std::f64::consts::TAU);
    let centre = (mean_angle / std::f64::consts::TAU * HUE_SCALE as f64).round() as u16 % HUE_SCALE;
    // shift so the circular mean sits mid-scale
    let shift = (HUE_SCALE + HUE_SCALE / 2 - centre) % HUE_SCALE;

    let mut hue_hist = vec![0u64; HUE_SCALE as usize];
    let mut sat_hist = vec![0u64; 256];
    let mut val_hist = vec![0u64; 256];
    for p in &hsv {
        hue_hist[((p.h as u16 + shift) % HUE_SCALE) as usize] += 1;
        sat_hist[p.s as usize] += 1;
        val_hist[p.v as usize] += 1;
    }
    let (hl, hh) = percentile_range(&hue_hist, total);
    let unshift = |v: usize| ((v as u16 + HUE_SCALE - shift) % HUE_SCALE) as u8;
    let (sl, sh) = percentile_range(&sat_hist, total);
    let (vl, vh) = percentile_range(&val_hist, total);
    Ok(HsvBackgroundModel {
        hue: HueRange {
            low: unshift(hl),
            high: unshift(hh),
        },
        saturation: Range {
            low: sl as u8,
            high: sh as u8,
        },
        value: Range {
            low: vl as u8,
            high: vh as u8,
        },
        margin: BACKGROUND_MARGIN,
    })
}

/// Marks every pixel whose colour falls outside the background model.
pub fn segment(frame: &ColorFrame, model: &HsvBackgroundModel) -> BinaryMask {
    let bits = frame
        .pixels
        .chunks_exact(3)
        .map(|p| !model.is_background(rgb_to_hsv([p[0], p[1], p[2]])))
        .collect();
    BinaryMask::from_bits(frame.width, frame.height, bits).expect("frame dimensions")
}

/// Segmentation followed by [`denoise`] and, when anything survives,
/// [`largest_component`].
pub fn extract_silhouette(frame: &ColorFrame, model: &HsvBackgroundModel) -> BinaryMask {
    let mask = denoise(&segment(frame, model), DEFAULT_MIN_BLOB_FRACTION);
    largest_component(&mask).unwrap_or(mask)
}

/// Per-pixel, per-channel temporal median (lower middle for even counts).
/// A walker that keeps moving covers any one pixel in a minority of frames,
/// so the median recovers the empty background.
pub fn median_background(frames: &[ColorFrame]) -> Result<ColorFrame> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Empty("no frames to estimate a background from".into()))?;
    if frames.iter().any(|f| f.width != first.width || f.height != first.height) {
        return Err(Error::Shape("frames differ in size".into()));
    }
    let n = frames.len();
    let pixels = crate::par::map_range(first.pixels.len(), |i| {
        let mut column: Vec<u8> = frames.iter().map(|f| f.pixels[i]).collect();
        let mid = (n - 1) / 2;
        *column.select_nth_unstable(mid).1
    });
    ColorFrame::new(first.width, first.height, pixels, 0)
}

/// Silhouettes of a recorded walk. Frames that are already black-and-white
/// masks pass through unchanged; otherwise the background model is learned
/// from `background` or, when absent, from the temporal median.
pub fn segment_sequence(frames: &[ColorFrame], background: Option<&ColorFrame>) -> Result<Vec<BinaryMask>> {
    if frames.is_empty() {
        return Err(Error::Empty("no frames to segment".into()));
    }
    let as_masks: Option<Vec<BinaryMask>> = frames.iter().map(ColorFrame::as_binary_mask).collect();
    if let Some(masks) = as_masks {
        return Ok(masks);
    }
    let estimated;
    let plate = match background {
        Some(b) => b,
        None => {
            estimated = median_background(frames)?;
            &estimated
        }
    };
    if frames.iter().any(|f| f.width != plate.width || f.height != plate.height) {
        return Err(Error::Shape("background and frames differ in size".into()));
    }
    let model = learn_background(plate)?;
    Ok(crate::par::map_slice(frames, |f| extract_silhouette(f, &model)))
}
