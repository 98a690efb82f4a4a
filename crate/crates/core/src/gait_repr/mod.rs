//! Silhouette and skeleton sequences to per-cycle gait energy images.

mod cycles;
mod dataset;
mod energy;
mod normalize;
mod pipeline;
mod resample;
mod skeleton;

pub use cycles::{
    detect_cycles, smooth3, stride_width, trim_partial, CycleDetector, WidthPeriodicity,
};
pub use dataset::{
    energy_file, frame_file, load_manifest, load_samples, load_sequence, mask_file, pose_file,
    sequence_dir, write_manifest, Dataset, LoadedSequence, Manifest, SequenceEntry, MANIFEST_FILE,
};
pub use energy::{compute_gei, compute_sei, mean_image, EnergyImage, EnergyKind, Provenance};
pub use normalize::{
    crop_normalize, crop_normalize_binary, resample_grid, sample_square, Edge, NormalizedFrame,
};
pub use pipeline::{
    cycle_energy, cycle_energy_images, cycle_records, energy_from_masks, sequence_energy_image,
    CycleRecord, PipelineInput,
};
pub use resample::{resample_fps, TARGET_FPS};
pub use skeleton::{
    load_pose, rasterize_skeleton, save_pose, Keypoint, PoseFrame, BODY_25_PAIRS,
    CONFIDENCE_THRESHOLD, NUM_KEYPOINTS, STROKE_THICKNESS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{GaitClass, Severity};
use crate::silhouette::BinaryMask;

/// Side length of every energy image.
pub const ENERGY_SIZE: usize = 224;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

/// Who walked, how, and which recording.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub subject: u32,
    pub class: GaitClass,
    pub severity: Severity,
    pub direction: Direction,
    pub sequence: u32,
    #[serde(default)]
    pub repeat: bool,
}

/// Ordered silhouettes of one walk.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteSequence {
    pub masks: Vec<BinaryMask>,
    pub source_fps: f64,
    /// Original frame number of each mask.
    pub frame_indices: Vec<usize>,
    pub meta: Option<SequenceMeta>,
}

impl SilhouetteSequence {
    pub fn new(masks: Vec<BinaryMask>, source_fps: f64, meta: Option<SequenceMeta>) -> Result<Self> {
        if !(source_fps > 0.0 && source_fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("frame rate {source_fps} must be positive")));
        }
        if let Some(first) = masks.first() {
            if masks
                .iter()
                .any(|m| m.width() != first.width() || m.height() != first.height())
            {
                return Err(Error::Shape("masks of one sequence differ in size".into()));
            }
        }
        let frame_indices = (0..masks.len()).collect();
        Ok(Self {
            masks,
            source_fps,
            frame_indices,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Keeps the given positions (into the current mask list), in order.
    pub(crate) fn select(&self, positions: &[usize], fps: f64) -> Self {
        Self {
            masks: positions.iter().map(|&i| self.masks[i].clone()).collect(),
            source_fps: fps,
            frame_indices: positions.iter().map(|&i| self.frame_indices[i]).collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Inclusive frame span of one gait cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaitCycle {
    pub start_frame: usize,
    pub end_frame: usize,
}

impl GaitCycle {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}
