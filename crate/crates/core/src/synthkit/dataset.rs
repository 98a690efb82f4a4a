use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_sequence_with, preset, Anthropometrics, GaitStyleParams, SequenceOptions};
use crate::error::{Error, Result};
use crate::gait_repr::{
    cycle_energy_images, energy_file, frame_file, mask_file, pose_file, save_pose, sequence_dir,
    write_manifest, Direction, GaitCycle, Manifest, PipelineInput, SequenceEntry,
    TARGET_FPS,
};
use crate::labels::{GaitClass, Severity};
use crate::par;

/// Ground-truth sidecar written next to every synthetic sequence.
pub const TRUTH_FILE: &str = "truth.json";
/// Dataset-level sidecar listing every subject's proportions.
pub const DATASET_TRUTH_FILE: &str = "synthkit.json";
pub const BACKGROUND_FILE: &str = "background.png";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub n_subjects: usize,
    pub seqs_per_class: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Length of each walk in gait cycles.
    pub cycles_per_sequence: f64,
    pub jitter: f64,
    pub noise_sigma: f64,
    /// Also write colour frames and a background plate.
    pub write_frames: bool,
    /// Also write per-cycle GEI and SEI images.
    pub write_energy: bool,
    /// Number given to the first subject.
    pub first_subject: u32,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            n_subjects: 5,
            seqs_per_class: 2,
            seed: 0,
            width: 360,
            height: 128,
            fps: TARGET_FPS,
            cycles_per_sequence: 3.0,
            jitter: 0.5,
            noise_sigma: 2.0,
            write_frames: false,
            write_energy: false,
            first_subject: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject: u32,
    pub body: Anthropometrics,
    /// Personal tempo multiplier applied to every preset cadence.
    pub tempo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTruth {
    pub seed: u64,
    pub subjects: Vec<SubjectTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceTruth {
    pub class: GaitClass,
    pub severity: Severity,
    pub direction: Direction,
    pub seed: u64,
    pub fps: f64,
    pub params: GaitStyleParams,
    pub body: Anthropometrics,
    pub cycles: Vec<GaitCycle>,
}

fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for &p in parts {
        z ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(z << 6).wrapping_add(z >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

struct Job {
    subject: SubjectTruth,
    class: GaitClass,
    severity: Severity,
    sequence: u32,
}

/// Writes a labeled synthetic dataset under `root` and returns its
/// manifest and subject truth.
pub fn generate_dataset(root: impl AsRef<Path>, opts: &DatasetOptions) -> Result<(Manifest, DatasetTruth)> {
    let root = root.as_ref();
    if opts.n_subjects < 2 {
        return Err(Error::InvalidArgument("a dataset needs at least 2 subjects".into()));
    }
    if opts.seqs_per_class == 0 {
        return Err(Error::InvalidArgument("seqs_per_class must be positive".into()));
    }
    if !(opts.cycles_per_sequence >= 1.0) {
        return Err(Error::InvalidArgument("cycles_per_sequence must be at least 1".into()));
    }
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let subjects: Vec<SubjectTruth> = (0..opts.n_subjects)
        .map(|i| {
            let subject = opts.first_subject + i as u32;
            let mut rng = ChaCha8Rng::seed_from_u64(mix(opts.seed, &[subject as u64]));
            SubjectTruth {
                subject,
                body: Anthropometrics::sample(&mut rng),
                tempo: rng.random_range(0.93..=1.07),
            }
        })
        .collect();

    let mut jobs = Vec::new();
    for s in &subjects {
        for class in GaitClass::ALL {
            for q in 0..opts.seqs_per_class {
                let severity = match class {
                    GaitClass::Normal => Severity::Na,
                    _ if (s.subject as usize + q).is_multiple_of(2) => Severity::Sev1,
                    _ => Severity::Sev2,
                };
                jobs.push(Job {
                    subject: s.clone(),
                    class,
                    severity,
                    sequence: q as u32,
                });
            }
        }
    }

    let entries = par::map_slice(&jobs, |job| write_sequence(root, opts, job));
    let sequences = entries.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(Some(format!("synthkit seed {}", opts.seed)), sequences);
    write_manifest(root, &manifest)?;
    let truth = DatasetTruth {
        seed: opts.seed,
        subjects,
    };
    write_json(&root.join(DATASET_TRUTH_FILE), &truth)?;
    Ok((manifest, truth))
}

fn write_sequence(root: &Path, opts: &DatasetOptions, job: &Job) -> Result<SequenceEntry> {
    let mut params = preset(job.class, job.severity);
    params.cadence_frames = (params.cadence_frames * job.subject.tempo).clamp(10.0, 40.0);
    let seed = mix(
        opts.seed,
        &[job.subject.subject as u64, job.class.index() as u64, job.sequence as u64],
    );
    let direction = if job.sequence.is_multiple_of(2) {
        Direction::LeftToRight
    } else {
        Direction::RightToLeft
    };
    let n_frames = (opts.cycles_per_sequence * params.cadence_frames * opts.fps / TARGET_FPS).ceil() as usize;
    let seq = generate_sequence_with(
        &params,
        &SequenceOptions {
            n_frames,
            width: opts.width,
            height: opts.height,
            fps: opts.fps,
            seed,
            jitter: opts.jitter,
            direction,
            body: job.subject.body,
        },
    )?;
    let rel = sequence_dir(job.subject.subject, job.class, job.severity, job.sequence);
    let dir = root.join(&rel);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (i, (mask, pose)) in seq.masks.masks.iter().zip(&seq.poses).enumerate() {
        mask.save(dir.join(mask_file(i)))?;
        save_pose(pose, dir.join(pose_file(i)))?;
    }
    if opts.write_frames {
        for f in seq.color_frames(opts.noise_sigma, seed) {
            f.save(dir.join(frame_file(f.index)))?;
        }
        seq.background(opts.noise_sigma, seed ^ 0xBAC6)
            .save(dir.join(BACKGROUND_FILE))?;
    }
    let entry = SequenceEntry {
        subject: job.subject.subject,
        class: job.class,
        severity: job.severity,
        direction,
        sequence: job.sequence,
        repeat: false,
        fps: opts.fps,
        frames: n_frames,
        width: opts.width,
        height: opts.height,
        path: rel,
    };
    if opts.write_energy {
        let mut masks = seq.masks.clone();
        masks.meta = Some(entry.meta());
        let inputs = [
            PipelineInput::silhouettes(masks),
            PipelineInput::poses(&seq.poses, opts.width, opts.height, opts.fps, Some(entry.meta()))?,
        ];
        for input in &inputs {
            for (k, img) in cycle_energy_images(input)?.iter().enumerate() {
                img.save(dir.join(energy_file(input.kind, k)))?;
            }
        }
    }
    write_json(
        &dir.join(TRUTH_FILE),
        &SequenceTruth {
            class: job.class,
            severity: job.severity,
            direction,
            seed,
            fps: opts.fps,
            params,
            body: job.subject.body,
            cycles: seq.cycles.clone(),
        },
    )?;
    Ok(entry)
}

