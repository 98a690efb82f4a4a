use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::silhouette::BinaryMask;

pub const NUM_KEYPOINTS: usize = 25;
/// Keypoints at or below this confidence are not drawn.
pub const CONFIDENCE_THRESHOLD: f64 = 0.1;
/// Limb stroke width in source pixels.
pub const STROKE_THICKNESS: f64 = 4.0;

/// Limb connections of the 25-keypoint body layout.
pub const BODY_25_PAIRS: [(usize, usize); 24] = [
    (1, 8),
    (1, 2),
    (1, 5),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (8, 9),
    (9, 10),
    (10, 11),
    (8, 12),
    (12, 13),
    (13, 14),
    (1, 0),
    (0, 15),
    (15, 17),
    (0, 16),
    (16, 18),
    (14, 19),
    (19, 20),
    (14, 21),
    (11, 22),
    (22, 23),
    (11, 24),
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_confident(&self) -> bool {
        self.confidence > CONFIDENCE_THRESHOLD
    }
}

/// One frame of 2-D body keypoints. Serialized as an array of 25
/// `[x, y, confidence]` triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct PoseFrame {
    keypoints: [Keypoint; NUM_KEYPOINTS],
}

impl PoseFrame {
    pub fn new(keypoints: [Keypoint; NUM_KEYPOINTS]) -> Result<Self> {
        for (i, k) in keypoints.iter().enumerate() {
            if !(0.0..=1.0).contains(&k.confidence) {
                return Err(Error::InvalidArgument(format!(
                    "keypoint {i} confidence {} outside [0, 1]",
                    k.confidence
                )));
            }
            if k.confidence > 0.0 && !(k.x.is_finite() && k.y.is_finite()) {
                return Err(Error::InvalidArgument(format!("keypoint {i} has non-finite coordinates")));
            }
        }
        Ok(Self { keypoints })
    }

    /// All keypoints missing.
    pub fn empty() -> Self {
        Self {
            keypoints: [Keypoint::default(); NUM_KEYPOINTS],
        }
    }

    pub fn keypoints(&self) -> &[Keypoint; NUM_KEYPOINTS] {
        &self.keypoints
    }

    pub fn set(&mut self, index: usize, kp: Keypoint) -> Result<()> {
        let mut k = self.keypoints;
        *k.get_mut(index)
            .ok_or_else(|| Error::InvalidArgument(format!("keypoint index {index}")))? = kp;
        *self = Self::new(k)?;
        Ok(())
    }

    pub fn confident_count(&self) -> usize {
        self.keypoints.iter().filter(|k| k.is_confident()).count()
    }
}

impl TryFrom<Vec<[f64; 3]>> for PoseFrame {
    type Error = Error;

    fn try_from(v: Vec<[f64; 3]>) -> Result<Self> {
        if v.len() != NUM_KEYPOINTS {
            return Err(Error::InvalidArgument(format!(
                "pose has {} keypoints, expected {NUM_KEYPOINTS}",
                v.len()
            )));
        }
        let mut k = [Keypoint::default(); NUM_KEYPOINTS];
        for (dst, [x, y, c]) in k.iter_mut().zip(v) {
            *dst = Keypoint::new(x, y, c);
        }
        Self::new(k)
    }
}

impl From<PoseFrame> for Vec<[f64; 3]> {
    fn from(p: PoseFrame) -> Self {
        p.keypoints.iter().map(|k| [k.x, k.y, k.confidence]).collect()
    }
}

pub fn load_pose(path: impl AsRef<Path>) -> Result<PoseFrame> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_pose(pose: &PoseFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_string(pose)?).map_err(|e| Error::io(path, e))
}

fn segment_distance(px: f64, py: f64, a: Keypoint, b: Keypoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - a.x) * dx + (py - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.x + t * dx, a.y + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

fn draw_stroke(mask: &mut BinaryMask, a: Keypoint, b: Keypoint, thickness: f64) {
    let r = thickness / 2.0;
    let x0 = (a.x.min(b.x) - r).floor().max(0.0) as usize;
    let y0 = (a.y.min(b.y) - r).floor().max(0.0) as usize;
    let x1 = ((a.x.max(b.x) + r).ceil().max(-1.0) as i64).min(mask.width() as i64 - 1);
    let y1 = ((a.y.max(b.y) + r).ceil().max(-1.0) as i64).min(mask.height() as i64 - 1);
    if x1 < 0 || y1 < 0 {
        return;
    }
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            if segment_distance(x as f64, y as f64, a, b) <= r {
                mask.set(x, y, true);
            }
        }
    }
}

/// Draws every limb whose two endpoints are confident, `STROKE_THICKNESS`
/// pixels wide, on a `width × height` canvas.
pub fn rasterize_skeleton(pose: &PoseFrame, width: usize, height: usize) -> Result<BinaryMask> {
    if pose.confident_count() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pose has {} confident keypoints, need at least 2",
            pose.confident_count()
        )));
    }
    let mut mask = BinaryMask::new(width, height);
    let k = pose.keypoints();
    for &(i, j) in &BODY_25_PAIRS {
        if k[i].is_confident() && k[j].is_confident() {
            draw_stroke(&mut mask, k[i], k[j], STROKE_THICKNESS);
        }
    }
    Ok(mask)
}
