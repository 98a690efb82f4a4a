//! On-disk dataset layout:
//!
//! ```text
//! root/manifest.json
//! root/subject_NN/{class}_{sev1|sev2|na}/seq_MM/
//!     frame_0000.png   colour frames (optional)
//!     mask_0000.png    binary silhouettes
//!     pose_0000.json   25 [x, y, confidence] triplets
//!     gei_cycle_00.png / sei_cycle_00.png   derived energy images
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::energy::{EnergyImage, EnergyKind};
use super::pipeline::{cycle_energy_images, PipelineInput};
use super::skeleton::{load_pose, PoseFrame};
use super::{Direction, SequenceMeta, SilhouetteSequence};
use crate::classifier::Sample;
use crate::error::{Error, Result};
use crate::labels::{GaitClass, Severity};
use crate::par;
use crate::silhouette::BinaryMask;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub subject: u32,
    pub class: GaitClass,
    pub severity: Severity,
    pub direction: Direction,
    pub sequence: u32,
    #[serde(default)]
    pub repeat: bool,
    pub fps: f64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Directory relative to the dataset root, `/`-separated.
    pub path: String,
}

impl SequenceEntry {
    pub fn meta(&self) -> SequenceMeta {
        SequenceMeta {
            subject: self.subject,
            class: self.class,
            severity: self.severity,
            direction: self.direction,
            sequence: self.sequence,
            repeat: self.repeat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub sequences: Vec<SequenceEntry>,
}

impl Manifest {
    pub fn new(name: Option<String>, sequences: Vec<SequenceEntry>) -> Self {
        Self {
            version: 1,
            name,
            sequences,
        }
    }

    /// Distinct subject numbers, ascending.
    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.sequences.iter().map(|e| e.subject).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Relative directory of one sequence.
pub fn sequence_dir(subject: u32, class: GaitClass, severity: Severity, sequence: u32) -> String {
    format!(
        "subject_{subject:02}/{}_{}/seq_{sequence:02}",
        class.name(),
        severity.tag()
    )
}

pub fn frame_file(i: usize) -> String {
    format!("frame_{i:04}.png")
}

pub fn mask_file(i: usize) -> String {
    format!("mask_{i:04}.png")
}

pub fn pose_file(i: usize) -> String {
    format!("pose_{i:04}.json")
}

pub fn energy_file(kind: EnergyKind, cycle: usize) -> String {
    match kind {
        EnergyKind::Gei => format!("gei_cycle_{cycle:02}.png"),
        EnergyKind::Sei => format!("sei_cycle_{cycle:02}.png"),
    }
}

pub fn write_manifest(root: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = root.as_ref().join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_manifest(root: impl AsRef<Path>) -> Result<Manifest> {
    let path = root.as_ref().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.sequences.is_empty() {
        return Err(Error::Dataset(format!("{} lists no sequences", path.display())));
    }
    Ok(m)
}

/// Masks and poses of one sequence, whichever are present.
#[derive(Debug, Clone)]
pub struct LoadedSequence {
    pub entry: SequenceEntry,
    pub masks: Option<SilhouetteSequence>,
    pub poses: Option<Vec<PoseFrame>>,
}

impl LoadedSequence {
    pub fn pipeline_input(&self, kind: EnergyKind) -> Result<PipelineInput> {
        let e = &self.entry;
        match kind {
            EnergyKind::Gei => self
                .masks
                .clone()
                .map(PipelineInput::silhouettes)
                .ok_or_else(|| Error::Dataset(format!("{} has no masks", e.path))),
            EnergyKind::Sei => {
                let poses = self
                    .poses
                    .as_ref()
                    .ok_or_else(|| Error::Dataset(format!("{} has no pose files", e.path)))?;
                PipelineInput::poses(poses, e.width, e.height, e.fps, Some(e.meta()))
            }
        }
    }
}

pub fn load_sequence(root: impl AsRef<Path>, entry: &SequenceEntry) -> Result<LoadedSequence> {
    let dir = root.as_ref().join(&entry.path);
    let masks = if dir.join(mask_file(0)).exists() {
        let m = (0..entry.frames)
            .map(|i| BinaryMask::load(dir.join(mask_file(i))))
            .collect::<Result<Vec<_>>>()?;
        Some(SilhouetteSequence::new(m, entry.fps, Some(entry.meta()))?)
    } else {
        None
    };
    let poses = if dir.join(pose_file(0)).exists() {
        Some(
            (0..entry.frames)
                .map(|i| load_pose(dir.join(pose_file(i))))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    if masks.is_none() && poses.is_none() {
        return Err(Error::Dataset(format!("{} holds neither masks nor poses", dir.display())));
    }
    Ok(LoadedSequence {
        entry: entry.clone(),
        masks,
        poses,
    })
}

/// A dataset directory with its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest = load_manifest(&root)?;
        Ok(Self { root, manifest })
    }

    pub fn sequence_path(&self, entry: &SequenceEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Stored per-cycle energy images, if any were written.
    pub fn cached_energy(&self, entry: &SequenceEntry, kind: EnergyKind) -> Result<Option<Vec<EnergyImage>>> {
        let dir = self.sequence_path(entry);
        let mut out = Vec::new();
        while dir.join(energy_file(kind, out.len())).exists() {
            let img = EnergyImage::load(kind, dir.join(energy_file(kind, out.len())))?;
            out.push(img.with_meta(Some(entry.meta())));
        }
        Ok((!out.is_empty()).then_some(out))
    }

    /// Per-cycle energy images of one sequence, computed from masks or
    /// poses; stored image files are used only when neither is present.
    pub fn energy_images(&self, entry: &SequenceEntry, kind: EnergyKind) -> Result<Vec<EnergyImage>> {
        let dir = self.sequence_path(entry);
        let source_present = match kind {
            EnergyKind::Gei => dir.join(mask_file(0)).exists(),
            EnergyKind::Sei => dir.join(pose_file(0)).exists(),
        };
        if !source_present {
            if let Some(cached) = self.cached_energy(entry, kind)? {
                return Ok(cached);
            }
        }
        let loaded = load_sequence(&self.root, entry)?;
        cycle_energy_images(&loaded.pipeline_input(kind)?)
    }

    /// Every cycle of every sequence as a labeled sample, in manifest order.
    pub fn samples(&self, kind: EnergyKind) -> Result<Vec<Sample>> {
        let per_seq = par::map_slice(&self.manifest.sequences, |e| {
            self.energy_images(e, kind).map(|imgs| {
                imgs.into_iter()
                    .map(|img| Sample {
                        pixels: img.into_data(),
                        label: e.class.index(),
                        subject: e.subject,
                        repeat: e.repeat,
                    })
                    .collect::<Vec<_>>()
            })
        });
        let mut out = Vec::new();
        for s in per_seq {
            out.extend(s?);
        }
        if out.is_empty() {
            return Err(Error::Dataset(format!(
                "{} yielded no complete gait cycles",
                self.root.display()
            )));
        }
        Ok(out)
    }
}

/// Opens `root` and returns its per-cycle samples.
pub fn load_samples(root: impl AsRef<Path>, kind: EnergyKind) -> Result<Vec<Sample>> {
    Dataset::open(root)?.samples(kind)
}
