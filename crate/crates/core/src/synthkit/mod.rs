//! Deterministic procedural walkers: a planar stick figure with thick
//! limbs, driven by sinusoidal joint trajectories whose parameters encode
//! each gait class.

mod dataset;
mod figure;
mod render;

pub use dataset::{
    generate_dataset, DatasetOptions, DatasetTruth, SequenceTruth, SubjectTruth, BACKGROUND_FILE,
    DATASET_TRUTH_FILE, TRUTH_FILE,
};
pub use figure::{Capsule, Figure, Part};
pub use render::{background_frame, color_frame, Palette, BACKGROUND_RGB};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait_repr::{Direction, GaitCycle, PoseFrame, SilhouetteSequence, TARGET_FPS};
use crate::labels::{GaitClass, Severity};
use crate::silhouette::ColorFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Kinematic style of a walker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitStyleParams {
    /// Forward trunk inclination.
    pub torso_lean_deg: f64,
    /// Distance between the feet at double support, as a fraction of leg
    /// length.
    pub step_length: f64,
    /// Extra hip and knee flexion during swing.
    pub knee_lift: f64,
    pub arm_swing_left: f64,
    pub arm_swing_right: f64,
    /// Stiff-kneed, toe-dragging swing of the affected leg(s).
    pub circumduction: f64,
    /// Leg that drags; `None` means both.
    pub dragging_side: Option<Side>,
    /// Hand tremor amplitude in pixels.
    pub shake_amplitude: f64,
    /// Frames per gait cycle at 10 fps.
    pub cadence_frames: f64,
    pub severity_scale: f64,
}

impl GaitStyleParams {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("step_length", self.step_length),
            ("knee_lift", self.knee_lift),
            ("arm_swing_left", self.arm_swing_left),
            ("arm_swing_right", self.arm_swing_right),
            ("circumduction", self.circumduction),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.5).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1.5]")));
            }
        }
        if !(10.0..=40.0).contains(&self.cadence_frames) {
            return Err(Error::InvalidArgument(format!(
                "cadence {} frames outside [10, 40]",
                self.cadence_frames
            )));
        }
        if !(0.0..=60.0).contains(&self.torso_lean_deg) || !(self.shake_amplitude >= 0.0) {
            return Err(Error::InvalidArgument("lean or shake out of range".into()));
        }
        if !(self.severity_scale > 0.0) {
            return Err(Error::InvalidArgument("severity scale must be positive".into()));
        }
        Ok(())
    }

    fn normal() -> Self {
        Self {
            torso_lean_deg: 0.0,
            step_length: 0.75,
            knee_lift: 0.3,
            arm_swing_left: 0.6,
            arm_swing_right: 0.6,
            circumduction: 0.0,
            dragging_side: None,
            shake_amplitude: 0.0,
            cadence_frames: 16.0,
            severity_scale: 1.0,
        }
    }
}

/// Style preset of a class. Severity 2 exaggerates the class traits by
/// half again; the normal class ignores severity.
pub fn preset(class: GaitClass, severity: Severity) -> GaitStyleParams {
    let s = match (class, severity) {
        (GaitClass::Normal, _) | (_, Severity::Na) | (_, Severity::Sev1) => 1.0,
        (_, Severity::Sev2) => 1.5,
    };
    let base = GaitStyleParams::normal();
    match class {
        GaitClass::Normal => base,
        GaitClass::Diplegic => GaitStyleParams {
            torso_lean_deg: 12.0 * s,
            step_length: 0.75 - 0.25 * s,
            knee_lift: 0.2,
            arm_swing_left: 0.45,
            arm_swing_right: 0.45,
            circumduction: 0.6 * s,
            dragging_side: None,
            cadence_frames: 16.0 + 4.0 * s,
            severity_scale: s,
            ..base
        },
        GaitClass::Hemiplegic => GaitStyleParams {
            torso_lean_deg: 3.0 * s,
            step_length: 0.65,
            arm_swing_left: 0.6,
            arm_swing_right: 0.0,
            circumduction: 0.8 * s,
            dragging_side: Some(Side::Right),
            cadence_frames: 16.0 + 3.0 * s,
            severity_scale: s,
            ..base
        },
        GaitClass::Neuropathic => GaitStyleParams {
            torso_lean_deg: 4.0,
            step_length: 0.7,
            knee_lift: 0.9 * s,
            cadence_frames: 15.0 + 2.0 * s,
            severity_scale: s,
            ..base
        },
        GaitClass::Parkinsonian => GaitStyleParams {
            torso_lean_deg: 15.0 * s,
            step_length: 0.75 - 0.3 * s,
            knee_lift: 0.15,
            arm_swing_left: 0.2 / s,
            arm_swing_right: 0.2 / s,
            shake_amplitude: 1.5 * s,
            cadence_frames: 18.0 - 4.0 * s,
            severity_scale: s,
            ..base
        },
    }
}

/// Body proportions as multipliers of the nominal figure; each lies in
/// `[0.9, 1.1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anthropometrics {
    pub stature: f64,
    pub thigh: f64,
    pub shank: f64,
    pub foot: f64,
    pub torso: f64,
    pub neck: f64,
    pub head: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub girth: f64,
}

impl Default for Anthropometrics {
    fn default() -> Self {
        Self {
            stature: 1.0,
            thigh: 1.0,
            shank: 1.0,
            foot: 1.0,
            torso: 1.0,
            neck: 1.0,
            head: 1.0,
            upper_arm: 1.0,
            forearm: 1.0,
            girth: 1.0,
        }
    }
}

impl Anthropometrics {
    /// Independent uniform ±10 % variation of every proportion.
    pub fn sample(rng: &mut impl Rng) -> Self {
        let mut d = || rng.random_range(0.9..=1.1);
        Self {
            stature: d(),
            thigh: d(),
            shank: d(),
            foot: d(),
            torso: d(),
            neck: d(),
            head: d(),
            upper_arm: d(),
            forearm: d(),
            girth: d(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOptions {
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub seed: u64,
    /// Standard deviation of per-frame joint-angle noise, in degrees.
    pub jitter: f64,
    pub direction: Direction,
    pub body: Anthropometrics,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        Self {
            n_frames: 60,
            width: 360,
            height: 128,
            fps: TARGET_FPS,
            seed: 0,
            jitter: 0.0,
            direction: Direction::LeftToRight,
            body: Anthropometrics::default(),
        }
    }
}

/// A rendered walk with its exact ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub params: GaitStyleParams,
    pub options: SequenceOptions,
    pub figures: Vec<Figure>,
    pub masks: SilhouetteSequence,
    pub poses: Vec<PoseFrame>,
    /// Complete cycles, in source frame numbers.
    pub cycles: Vec<GaitCycle>,
}

impl SyntheticSequence {
    /// Cycle length in source frames.
    pub fn cadence_source_frames(&self) -> f64 {
        self.params.cadence_frames * self.options.fps / TARGET_FPS
    }

    /// The walker composited over a noisy green screen. Clothing colours
    /// come from the sequence seed, noise from `seed`.
    pub fn color_frames(&self, noise_sigma: f64, seed: u64) -> Vec<ColorFrame> {
        let (w, h) = (self.options.width, self.options.height);
        let palette = Palette::from_seed(self.options.seed);
        crate::par::map_range(self.figures.len(), |i| {
            let frame_seed = seed ^ (i as u64 + 1).wrapping_mul(0x2545_F491_4F6C_DD1D);
            color_frame(&self.figures[i], &palette, w, h, noise_sigma, frame_seed, i)
        })
    }

    /// An empty green-screen plate with the same noise model.
    pub fn background(&self, noise_sigma: f64, seed: u64) -> ColorFrame {
        background_frame(self.options.width, self.options.height, noise_sigma, seed)
    }
}

fn ground_truth_cycles(n_frames: usize, cadence_source: f64) -> Vec<GaitCycle> {
    let mut out = Vec::new();
    for k in 0.. {
        let start = (k as f64 * cadence_source - 1e-9).ceil() as usize;
        let next = ((k + 1) as f64 * cadence_source - 1e-9).ceil() as usize;
        if next > n_frames {
            break;
        }
        out.push(GaitCycle {
            start_frame: start,
            end_frame: next - 1,
        });
    }
    out
}

/// [`generate_sequence_with`] for a left-to-right walk at 10 fps with
/// nominal proportions.
pub fn generate_sequence(
    params: &GaitStyleParams,
    n_frames: usize,
    frame_size: (usize, usize),
    seed: u64,
    jitter: f64,
) -> Result<SyntheticSequence> {
    generate_sequence_with(
        params,
        &SequenceOptions {
            n_frames,
            width: frame_size.0,
            height: frame_size.1,
            seed,
            jitter,
            ..SequenceOptions::default()
        },
    )
}

pub fn generate_sequence_with(params: &GaitStyleParams, opts: &SequenceOptions) -> Result<SyntheticSequence> {
    params.validate()?;
    if opts.n_frames == 0 {
        return Err(Error::InvalidArgument("a sequence needs at least one frame".into()));
    }
    if !(opts.fps >= TARGET_FPS) || !opts.fps.is_finite() {
        return Err(Error::InvalidArgument(format!("frame rate {} below {TARGET_FPS}", opts.fps)));
    }
    if opts.height < 48 || opts.width < opts.height {
        return Err(Error::InvalidArgument(format!(
            "frame {}x{} is too small for the figure (need height >= 48 and width >= height)",
            opts.width, opts.height
        )));
    }
    if !(opts.jitter >= 0.0) {
        return Err(Error::InvalidArgument("jitter must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let walker = figure::Walker::new(params, opts, &mut rng);
    let figures: Vec<Figure> = (0..opts.n_frames).map(|t| walker.pose_at(t, &mut rng)).collect();
    let masks = crate::par::map_slice(&figures, |f| f.mask(opts.width, opts.height));
    let poses = figures.iter().map(|f| f.keypoints(opts.direction)).collect();
    let cadence_source = params.cadence_frames * opts.fps / TARGET_FPS;
    Ok(SyntheticSequence {
        params: params.clone(),
        options: opts.clone(),
        figures,
        masks: SilhouetteSequence::new(masks, opts.fps, None)?,
        poses,
        cycles: ground_truth_cycles(opts.n_frames, cadence_source),
    })
}
