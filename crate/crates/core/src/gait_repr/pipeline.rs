use serde::{Deserialize, Serialize};

use super::cycles::{detect_cycles, trim_partial};
use super::energy::{compute_gei, EnergyImage, EnergyKind, Provenance};
use super::normalize::crop_normalize;
use super::resample::{resample_fps, TARGET_FPS};
use super::skeleton::{rasterize_skeleton, PoseFrame};
use super::{SequenceMeta, SilhouetteSequence};
use crate::error::{Error, Result};
use crate::par;
use crate::silhouette::BinaryMask;

/// A sequence ready for cycle extraction: silhouettes for GEIs, or
/// rasterized skeletons for SEIs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineInput {
    pub masks: SilhouetteSequence,
    pub kind: EnergyKind,
}

impl PipelineInput {
    pub fn silhouettes(masks: SilhouetteSequence) -> Self {
        Self {
            masks,
            kind: EnergyKind::Gei,
        }
    }

    /// Rasterizes each pose on a `width × height` canvas. Frames without two
    /// confident keypoints become empty masks.
    pub fn poses(
        poses: &[PoseFrame],
        width: usize,
        height: usize,
        fps: f64,
        meta: Option<SequenceMeta>,
    ) -> Result<Self> {
        let masks = par::map_slice(poses, |p| {
            rasterize_skeleton(p, width, height).unwrap_or_else(|_| BinaryMask::new(width, height))
        });
        Ok(Self {
            masks: SilhouetteSequence::new(masks, fps, meta)?,
            kind: EnergyKind::Sei,
        })
    }
}

/// One detected cycle, addressed by original frame numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Original frame numbers kept after resampling, in order.
    pub frames: Vec<usize>,
}

/// Trims, resamples to 10 fps and detects cycles.
pub fn cycle_records(masks: &SilhouetteSequence) -> Result<Vec<CycleRecord>> {
    let trimmed = trim_partial(masks)?;
    let resampled = resample_fps(&trimmed, TARGET_FPS)?;
    Ok(detect_cycles(&resampled)
        .into_iter()
        .enumerate()
        .map(|(index, c)| {
            let frames = resampled.frame_indices[c.start_frame..=c.end_frame].to_vec();
            CycleRecord {
                index,
                start_frame: frames[0],
                end_frame: *frames.last().expect("cycle is non-empty"),
                frames,
            }
        })
        .collect())
}

/// Normalizes and averages masks; empty masks are skipped.
pub fn energy_from_masks(masks: &[&BinaryMask], kind: EnergyKind) -> Result<EnergyImage> {
    let usable: Vec<&BinaryMask> = masks.iter().copied().filter(|m| !m.is_empty()).collect();
    if usable.is_empty() {
        return Err(Error::Empty("every frame of the span is empty".into()));
    }
    let frames = par::map_slice(&usable, |m| crop_normalize(m))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut e = compute_gei(&frames)?;
    e.kind = kind;
    Ok(e)
}

/// Energy image of one cycle of `input`.
pub fn cycle_energy(input: &PipelineInput, record: &CycleRecord) -> Result<EnergyImage> {
    let seq = &input.masks;
    let masks = record
        .frames
        .iter()
        .map(|f| {
            seq.frame_indices
                .iter()
                .position(|i| i == f)
                .map(|p| &seq.masks[p])
                .ok_or_else(|| Error::InvalidArgument(format!("cycle frame {f} is not in the sequence")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(energy_from_masks(&masks, input.kind)?
        .with_provenance(Provenance::Cycle {
            index: record.index,
            start_frame: record.start_frame,
            end_frame: record.end_frame,
        })
        .with_meta(seq.meta.clone()))
}

/// Every complete cycle's energy image, in temporal order.
pub fn cycle_energy_images(input: &PipelineInput) -> Result<Vec<EnergyImage>> {
    cycle_records(&input.masks)?
        .iter()
        .map(|r| cycle_energy(input, r))
        .collect()
}

/// Energy image over the whole trimmed, resampled sequence.
pub fn sequence_energy_image(input: &PipelineInput) -> Result<EnergyImage> {
    let resampled = resample_fps(&trim_partial(&input.masks)?, TARGET_FPS)?;
    let masks: Vec<&BinaryMask> = resampled.masks.iter().collect();
    Ok(energy_from_masks(&masks, input.kind)?
        .with_provenance(Provenance::FullSequence)
        .with_meta(input.masks.meta.clone()))
}
