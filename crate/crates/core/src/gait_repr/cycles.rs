use super::{GaitCycle, SilhouetteSequence};
use crate::error::{Error, Result};
use crate::silhouette::BinaryMask;

/// Strategy that splits a (resampled, trimmed) sequence into gait cycles.
pub trait CycleDetector {
    fn detect(&self, seq: &SilhouetteSequence) -> Vec<GaitCycle>;
}

/// Cycles from the periodicity of the silhouette's stride width.
///
/// The width peaks at every double-support instant, twice per cycle, so a
/// cycle runs from one peak to the frame before the peak two steps later.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthPeriodicity {
    pub min_len: usize,
    pub max_len: usize,
    /// Peaks closer than this many frames are merged (the higher survives).
    pub min_peak_separation: usize,
    /// Required peak prominence as a fraction of the signal's range.
    pub relative_prominence: f64,
    /// Required peak prominence in pixels.
    pub absolute_prominence: f64,
}

impl Default for WidthPeriodicity {
    fn default() -> Self {
        Self {
            min_len: 8,
            max_len: 40,
            min_peak_separation: 3,
            relative_prominence: 0.2,
            absolute_prominence: 1.0,
        }
    }
}

/// Three-tap moving average; the end samples average over their two
/// available neighbours.
pub fn smooth3(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            signal[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Horizontal extent of the lower half of the silhouette (the legs), which
/// peaks at double support without interference from arm motion.
pub fn stride_width(mask: &BinaryMask) -> f64 {
    let Some(bb) = mask.bbox() else {
        return 0.0;
    };
    let top = bb.min_y + bb.height() / 2;
    let (mut lo, mut hi) = (usize::MAX, 0);
    for y in top..=bb.max_y {
        for x in bb.min_x..=bb.max_x {
            if mask.get(x, y) {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    if lo > hi {
        0.0
    } else {
        (hi - lo + 1) as f64
    }
}

fn width_signal(seq: &SilhouetteSequence) -> Vec<f64> {
    seq.masks.iter().map(stride_width).collect()
}

/// Interior local maxima; a plateau counts once, at its middle.
fn local_maxima(s: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < s.len() {
        if s[i] > s[i - 1] {
            let mut j = i;
            while j + 1 < s.len() && s[j + 1] == s[i] {
                j += 1;
            }
            if j + 1 < s.len() && s[j + 1] < s[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

fn prominence(s: &[f64], p: usize) -> f64 {
    let h = s[p];
    let mut left_base = h;
    for &v in s[..p].iter().rev() {
        if v > h {
            break;
        }
        left_base = left_base.min(v);
    }
    let mut right_base = h;
    for &v in &s[p + 1..] {
        if v > h {
            break;
        }
        right_base = right_base.min(v);
    }
    h - left_base.max(right_base)
}

impl WidthPeriodicity {
    /// Peaks that pass the prominence and separation guards, ascending.
    pub fn peaks(&self, smoothed: &[f64]) -> Vec<usize> {
        let (lo, hi) = smoothed
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let threshold = (self.relative_prominence * (hi - lo)).max(self.absolute_prominence);
        let mut candidates: Vec<usize> = local_maxima(smoothed)
            .into_iter()
            .filter(|&p| prominence(smoothed, p) >= threshold)
            .collect();
        candidates.sort_by(|&a, &b| smoothed[b].total_cmp(&smoothed[a]).then(a.cmp(&b)));
        let mut kept: Vec<usize> = Vec::new();
        for p in candidates {
            if kept.iter().all(|&q| p.abs_diff(q) >= self.min_peak_separation) {
                kept.push(p);
            }
        }
        kept.sort_unstable();
        kept
    }

    /// Cycles from a raw (unsmoothed) width signal.
    pub fn cycles_from_signal(&self, widths: &[f64]) -> Vec<GaitCycle> {
        if widths.len() < 3 {
            return Vec::new();
        }
        let peaks = self.peaks(&smooth3(widths));
        let mut out = Vec::new();
        let mut i = 0;
        while i + 2 < peaks.len() {
            let cycle = GaitCycle {
                start_frame: peaks[i],
                end_frame: peaks[i + 2] - 1,
            };
            if (self.min_len..=self.max_len).contains(&cycle.len()) {
                out.push(cycle);
                i += 2;
            } else {
                i += 1;
            }
        }
        out
    }
}

impl CycleDetector for WidthPeriodicity {
    fn detect(&self, seq: &SilhouetteSequence) -> Vec<GaitCycle> {
        self.cycles_from_signal(&width_signal(seq))
    }
}

/// Cycles with the default width-periodicity detector. Frame numbers index
/// the given sequence.
pub fn detect_cycles(seq: &SilhouetteSequence) -> Vec<GaitCycle> {
    WidthPeriodicity::default().detect(seq)
}

/// Drops leading and trailing frames that are empty or whose silhouette
/// touches the left or right image border.
pub fn trim_partial(seq: &SilhouetteSequence) -> Result<SilhouetteSequence> {
    let usable = |i: usize| {
        let m = &seq.masks[i];
        m.bbox()
            .is_some_and(|b| b.min_x > 0 && b.max_x + 1 < m.width())
    };
    let first = (0..seq.len()).find(|&i| usable(i)).ok_or(Error::NoUsableSpan)?;
    let last = (0..seq.len()).rev().find(|&i| usable(i)).expect("first exists");
    let positions: Vec<usize> = (first..=last).collect();
    Ok(seq.select(&positions, seq.source_fps))
}
