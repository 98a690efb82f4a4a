use std::collections::VecDeque;

use super::BinaryMask;
use crate::error::{Error, Result};

/// Default minimum blob area as a fraction of the frame area.
pub const DEFAULT_MIN_BLOB_FRACTION: f64 = 0.0005;

fn neighbourhood(mask: &BinaryMask, want: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let mut hit = false;
            'scan: for yy in y0..=y1 {
                for xx in x0..=x1 {
                    if mask.get(xx, yy) == want {
                        hit = true;
                        break 'scan;
                    }
                }
            }
            // dilation: any foreground neighbour; erosion: no background neighbour
            out.set(x, y, if want { hit } else { !hit });
        }
    }
    out
}

/// 3×3 square dilation; pixels outside the frame are ignored.
pub fn dilate(mask: &BinaryMask) -> BinaryMask {
    neighbourhood(mask, true)
}

/// 3×3 square erosion; pixels outside the frame are ignored.
pub fn erode(mask: &BinaryMask) -> BinaryMask {
    neighbourhood(mask, false)
}

/// An 8-connected foreground region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// Row-major pixel indices.
    pub pixels: Vec<usize>,
    pub min_x: usize,
    pub min_y: usize,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// 8-connected components in raster order of their first pixel.
pub fn components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || !mask.bits()[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Component {
            pixels: Vec::new(),
            min_x: usize::MAX,
            min_y: usize::MAX,
        };
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            comp.pixels.push(i);
            comp.min_x = comp.min_x.min(x);
            comp.min_y = comp.min_y.min(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if !seen[j] && mask.bits()[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        comp.pixels.sort_unstable();
        out.push(comp);
    }
    out
}

fn from_components<'a>(w: usize, h: usize, comps: impl IntoIterator<Item = &'a Component>) -> BinaryMask {
    let mut bits = vec![false; w * h];
    for c in comps {
        for &i in &c.pixels {
            bits[i] = true;
        }
    }
    BinaryMask::from_bits(w, h, bits).expect("dimensions")
}

/// Opening by reconstruction followed by an area filter. A connected
/// component survives when part of it survives a 3×3 opening and its area is
/// at least `min_blob_area_fraction` of the frame; survivors are kept whole,
/// so the outline of the walker is never eroded.
pub fn denoise(mask: &BinaryMask, min_blob_area_fraction: f64) -> BinaryMask {
    if mask.width() == 0 || mask.height() == 0 {
        return mask.clone();
    }
    let min_area = (min_blob_area_fraction * (mask.width() * mask.height()) as f64).ceil() as usize;
    let opened = dilate(&erode(mask));
    let comps = components(mask);
    let kept = comps
        .iter()
        .filter(|c| c.area() >= min_area && c.pixels.iter().any(|&i| opened.bits()[i]));
    from_components(mask.width(), mask.height(), kept)
}

/// Keeps the largest 8-connected component; equal areas resolve to the
/// component whose bounding box top-left `(y, x)` is smallest.
pub fn largest_component(mask: &BinaryMask) -> Result<BinaryMask> {
    let comps = components(mask);
    let best = comps
        .iter()
        .min_by_key(|c| (std::cmp::Reverse(c.area()), c.min_y, c.min_x))
        .ok_or_else(|| Error::Empty("mask has no foreground".into()))?;
    Ok(from_components(mask.width(), mask.height(), [best]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(mask: &mut BinaryMask, x0: usize, y0: usize, w: usize, h: usize) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                mask.set(x, y, true);
            }
        }
    }

    #[test]
    fn single_component_is_identity() {
        let mut m = BinaryMask::new(10, 10);
        rect(&mut m, 2, 2, 3, 4);
        assert_eq!(largest_component(&m).unwrap(), m);
    }

    #[test]
    fn keeps_bigger_component() {
        let mut m = BinaryMask::new(30, 30);
        rect(&mut m, 0, 0, 10, 10);
        rect(&mut m, 20, 20, 1, 5);
        let mut expect = BinaryMask::new(30, 30);
        rect(&mut expect, 0, 0, 10, 10);
        assert_eq!(largest_component(&m).unwrap(), expect);
    }

    #[test]
    fn tie_goes_to_top_left() {
        let mut m = BinaryMask::new(20, 20);
        rect(&mut m, 12, 1, 3, 3);
        rect(&mut m, 2, 10, 3, 3);
        let mut expect = BinaryMask::new(20, 20);
        rect(&mut expect, 12, 1, 3, 3);
        assert_eq!(largest_component(&m).unwrap(), expect);
    }

    #[test]
    fn empty_mask_has_no_largest() {
        assert!(largest_component(&BinaryMask::new(4, 4)).is_err());
    }

    #[test]
    fn diagonal_pixels_connect() {
        let mut m = BinaryMask::new(3, 3);
        m.set(0, 0, true);
        m.set(1, 1, true);
        m.set(2, 2, true);
        assert_eq!(components(&m).len(), 1);
    }

    #[test]
    fn speckles_vanish() {
        let mut m = BinaryMask::new(40, 40);
        for i in 0..10 {
            m.set(3 * i + 2, (7 * i) % 37 + 1, true);
        }
        assert!(denoise(&m, DEFAULT_MIN_BLOB_FRACTION).is_empty());
    }

    #[test]
    fn thin_tail_stays_attached() {
        let mut m = BinaryMask::new(40, 40);
        rect(&mut m, 10, 8, 15, 20);
        rect(&mut m, 25, 12, 10, 1);
        assert_eq!(denoise(&m, DEFAULT_MIN_BLOB_FRACTION), m);
    }

    #[test]
    fn solid_blob_survives_untouched() {
        let mut m = BinaryMask::new(40, 40);
        rect(&mut m, 10, 8, 15, 20);
        assert_eq!(denoise(&m, DEFAULT_MIN_BLOB_FRACTION), m);
    }
}
