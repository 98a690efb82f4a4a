use std::io::Cursor;

use image::{GrayImage, ImageFormat, RgbImage};

use super::{FeatureMap, HeatMap};
use crate::error::{Error, Result};

pub const DEFAULT_OVERLAY_ALPHA: f32 = 0.55;

// dark-to-warm control points (black, purple, red, orange, pale yellow)
const RAMP: [(f32, [f32; 3]); 5] = [
    (0.00, [0.0, 0.0, 4.0]),
    (0.25, [87.0, 16.0, 110.0]),
    (0.50, [188.0, 55.0, 84.0]),
    (0.75, [249.0, 142.0, 9.0]),
    (1.00, [252.0, 255.0, 164.0]),
];

pub fn heat_color(v: f32) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let i = RAMP.windows(2).position(|w| v <= w[1].0).unwrap_or(RAMP.len() - 2);
    let (t0, c0) = RAMP[i];
    let (t1, c1) = RAMP[i + 1];
    let f = (v - t0) / (t1 - t0);
    std::array::from_fn(|k| (c0[k] + f * (c1[k] - c0[k])).round() as u8)
}


fn png_bytes(img: impl Into<image::DynamicImage>) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.into().write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// 8-bit grayscale PNG of `[0, 1]` values.
pub fn gray_png(values: &[f32], width: usize, height: usize) -> Result<Vec<u8>> {
    let px = values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let img = GrayImage::from_raw(width as u32, height as u32, px)
        .ok_or_else(|| Error::Shape(format!("{} values for a {width}x{height} image", values.len())))?;
    png_bytes(img)
}

pub fn feature_map_png(map: &FeatureMap) -> Result<Vec<u8>> {
    gray_png(&map.values, map.width, map.height)
}

/// Colour-mapped heat alpha-blended over a grayscale base image.
pub fn overlay(base: &[f32], heat: &HeatMap, alpha: f32) -> Result<RgbImage> {
    if base.len() != heat.values.len() {
        return Err(Error::Shape(format!(
            "base image has {} pixels, heatmap {}",
            base.len(),
            heat.values.len()
        )));
    }
    let a = alpha.clamp(0.0, 1.0);
    let mut px = Vec::with_capacity(base.len() * 3);
    for (&g, &h) in base.iter().zip(&heat.values) {
        let gray = g.clamp(0.0, 1.0) * 255.0;
        let c = heat_color(h);
        for ch in c {
            px.push(((1.0 - a) * gray + a * ch as f32).round() as u8);
        }
    }
    Ok(RgbImage::from_raw(heat.width as u32, heat.height as u32, px).expect("sizes checked"))
}

pub fn overlay_png(base: &[f32], heat: &HeatMap, alpha: f32) -> Result<Vec<u8>> {
    png_bytes(overlay(base, heat, alpha)?)
}
