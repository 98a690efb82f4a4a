use super::SilhouetteSequence;
use crate::error::{Error, Result};

/// Frame rate every representation is computed at.
pub const TARGET_FPS: f64 = 10.0;

/// Picks, for each output instant `k / target_fps`, the source frame
/// nearest in time.
pub fn resample_fps(seq: &SilhouetteSequence, target_fps: f64) -> Result<SilhouetteSequence> {
    if !(target_fps > 0.0) {
        return Err(Error::InvalidArgument(format!("target frame rate {target_fps}")));
    }
    if seq.source_fps < target_fps {
        return Err(Error::InvalidArgument(format!(
            "cannot resample {} fps up to {target_fps} fps",
            seq.source_fps
        )));
    }
    let ratio = seq.source_fps / target_fps;
    let mut positions = Vec::new();
    for k in 0.. {
        let idx = (k as f64 * ratio).round() as usize;
        if idx >= seq.len() {
            break;
        }
        positions.push(idx);
    }
    Ok(seq.select(&positions, target_fps))
}
