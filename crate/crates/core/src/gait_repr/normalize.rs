use super::ENERGY_SIZE;
use crate::error::{Error, Result};
use crate::silhouette::BinaryMask;

/// A `224 × 224` grayscale frame, row-major, values in `[0, 1]`.
pub type NormalizedFrame = Vec<f32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    /// Samples outside the source read as 0.
    Zero,
    /// Samples outside the source repeat the nearest edge pixel.
    Clamp,
}

/// Normalized triangle-filter taps for an output cell centred at `centre`
/// with source-pixel spacing `step`. Bilinear when upsampling, an area
/// average of matching width when downsampling.
fn taps(centre: f64, step: f64) -> Vec<(i64, f64)> {
    let support = step.max(1.0);
    let lo = (centre - support - 0.5).floor() as i64;
    let hi = (centre + support - 0.5).ceil() as i64;
    let mut out: Vec<(i64, f64)> = (lo..=hi)
        .filter_map(|i| {
            let d = (i as f64 + 0.5 - centre).abs() / support;
            (d < 1.0).then_some((i, 1.0 - d))
        })
        .collect();
    let total: f64 = out.iter().map(|t| t.1).sum();
    if total > 0.0 {
        out.iter_mut().for_each(|t| t.1 /= total);
    }
    out
}

/// Resamples the square source region `[x0, x0 + side) × [y0, y0 + side)`
/// (continuous pixel coordinates, pixel `i` spanning `[i, i + 1)`) onto an
/// `out × out` grid. Results are clamped to `[0, 1]`.
pub fn sample_square(
    src: &[f32],
    width: usize,
    height: usize,
    x0: f64,
    y0: f64,
    side: f64,
    out: usize,
    edge: Edge,
) -> Vec<f32> {
    let step = side / out as f64;
    let xt: Vec<Vec<(i64, f64)>> = (0..out).map(|u| taps(x0 + (u as f64 + 0.5) * step, step)).collect();
    let yt: Vec<Vec<(i64, f64)>> = (0..out).map(|v| taps(y0 + (v as f64 + 0.5) * step, step)).collect();
    let fetch = |x: i64, y: i64| -> f64 {
        let inside = x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height;
        match (inside, edge) {
            (true, _) => src[y as usize * width + x as usize] as f64,
            (false, Edge::Zero) => 0.0,
            (false, Edge::Clamp) => {
                let cx = x.clamp(0, width as i64 - 1) as usize;
                let cy = y.clamp(0, height as i64 - 1) as usize;
                src[cy * width + cx] as f64
            }
        }
    };
    let mut dst = vec![0f32; out * out];
    for (v, ys) in yt.iter().enumerate() {
        for (u, xs) in xt.iter().enumerate() {
            let mut acc = 0f64;
            for &(y, wy) in ys {
                for &(x, wx) in xs {
                    acc += wy * wx * fetch(x, y);
                }
            }
            dst[v * out + u] = acc.clamp(0.0, 1.0) as f32;
        }
    }
    dst
}

/// Resizes a full `width × height` grid to `out_w × out_h` with
/// clamp-to-edge sampling.
pub fn resample_grid(src: &[f32], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f32> {
    let sx = width as f64 / out_w as f64;
    let sy = height as f64 / out_h as f64;
    let xt: Vec<Vec<(i64, f64)>> = (0..out_w).map(|u| taps((u as f64 + 0.5) * sx, sx)).collect();
    let yt: Vec<Vec<(i64, f64)>> = (0..out_h).map(|v| taps((v as f64 + 0.5) * sy, sy)).collect();
    let mut dst = vec![0f32; out_w * out_h];
    for (v, ys) in yt.iter().enumerate() {
        for (u, xs) in xt.iter().enumerate() {
            let mut acc = 0f64;
            for &(y, wy) in ys {
                let yy = y.clamp(0, height as i64 - 1) as usize;
                for &(x, wx) in xs {
                    let xx = x.clamp(0, width as i64 - 1) as usize;
                    acc += wy * wx * src[yy * width + xx] as f64;
                }
            }
            dst[v * out_w + u] = acc as f32;
        }
    }
    dst
}

/// Square region of the source that becomes the normalized frame: the
/// tight bounding box padded so the foreground centroid column sits on the
/// centre column, and made square without cropping any foreground.
fn normalization_square(mask: &BinaryMask) -> Result<(f64, f64, f64)> {
    let bb = mask
        .bbox()
        .ok_or_else(|| Error::Empty("cannot normalize an empty silhouette".into()))?;
    let cx = mask.centroid_x().expect("non-empty") + 0.5;
    let (w, h) = (bb.width() as f64, bb.height() as f64);
    let c = cx - bb.min_x as f64;
    let half = (h / 2.0).max(c).max(w - c);
    let side = (2.0 * half).max(h);
    let x0 = cx - side / 2.0;
    let y0 = bb.min_y as f64 - (side - h) / 2.0;
    Ok((x0, y0, side))
}

/// Crops, pads and resizes a silhouette to `224 × 224`, keeping the
/// interpolated gray levels.
pub fn crop_normalize(mask: &BinaryMask) -> Result<NormalizedFrame> {
    let (x0, y0, side) = normalization_square(mask)?;
    let src = mask.to_f32();
    Ok(sample_square(
        &src,
        mask.width(),
        mask.height(),
        x0,
        y0,
        side,
        ENERGY_SIZE,
        Edge::Zero,
    ))
}

/// [`crop_normalize`] re-binarized at 0.5.
pub fn crop_normalize_binary(mask: &BinaryMask) -> Result<BinaryMask> {
    let gray = crop_normalize(mask)?;
    let mut bits: Vec<bool> = gray.iter().map(|&v| v >= 0.5).collect();
    if !bits.iter().any(|&b| b) {
        // a very thin silhouette can fall below threshold everywhere
        let peak = gray
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty grid");
        bits[peak] = true;
    }
    BinaryMask::from_bits(ENERGY_SIZE, ENERGY_SIZE, bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(w: usize, h: usize, x0: usize, y0: usize, bw: usize, bh: usize) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn centred_square_fills_output() {
        let m = blob(200, 200, 50, 50, 100, 100);
        let out = crop_normalize_binary(&m).unwrap();
        assert_eq!(out.count(), ENERGY_SIZE * ENERGY_SIZE);
    }

    #[test]
    fn square_symmetric_silhouette_needs_no_padding() {
        // a plus sign: square bounding box, centroid on the middle column
        let mut m = BinaryMask::new(60, 60);
        for i in 10..41 {
            for t in 22..29 {
                m.set(i, t, true);
                m.set(t, i, true);
            }
        }
        let out = crop_normalize_binary(&m).unwrap();
        let bb = out.bbox().unwrap();
        assert_eq!((bb.min_x, bb.max_x), (0, ENERGY_SIZE - 1));
        assert_eq!((bb.min_y, bb.max_y), (0, ENERGY_SIZE - 1));
    }

    #[test]
    fn off_centre_centroid_is_centred() {
        // an L shape: heavy foot to the right pulls the centroid
        let mut m = BinaryMask::new(120, 160);
        for y in 20..140 {
            for x in 30..45 {
                m.set(x, y, true);
            }
        }
        for y in 120..140 {
            for x in 45..100 {
                m.set(x, y, true);
            }
        }
        let out = crop_normalize_binary(&m).unwrap();
        let c = out.centroid_x().unwrap();
        assert!((c - 111.5).abs() <= 1.0, "centroid column {c}");
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(crop_normalize(&BinaryMask::new(5, 5)).is_err());
    }

    #[test]
    fn values_stay_in_unit_interval() {
        let m = blob(300, 400, 120, 30, 37, 301);
        let g = crop_normalize(&m).unwrap();
        assert_eq!(g.len(), ENERGY_SIZE * ENERGY_SIZE);
        assert!(g.iter().all(|&v| (0.0..=1.0 + 1e-6).contains(&v)));
    }

    #[test]
    fn grid_resample_keeps_constants() {
        let src = vec![0.25f32; 7 * 7];
        let out = resample_grid(&src, 7, 7, 224, 224);
        assert!(out.iter().all(|&v| (v - 0.25).abs() < 1e-6));
    }
}
