use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{GaitStyleParams, SequenceOptions, Side};
use crate::gait_repr::{Direction, Keypoint, PoseFrame, NUM_KEYPOINTS, TARGET_FPS};
use crate::silhouette::BinaryMask;

/// Clothing region of a body segment; selects its colour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Skin,
    Shirt,
    Trousers,
    Shoes,
}

/// A line segment swept by a disc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub radius: f64,
    pub part: Part,
}

impl Capsule {
    fn distance(&self, px: f64, py: f64) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((px - self.a.0) * dx + (py - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        ((px - self.a.0 - t * dx).powi(2) + (py - self.a.1 - t * dy).powi(2)).sqrt()
    }

    /// Pixels whose centre lies inside the capsule, clipped to the frame.
    pub fn pixels(&self, width: usize, height: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = self.radius;
        let x0 = (self.a.0.min(self.b.0) - r).floor().max(0.0) as usize;
        let y0 = (self.a.1.min(self.b.1) - r).floor().max(0.0) as usize;
        let x1 = ((self.a.0.max(self.b.0) + r).ceil().max(0.0) as usize).min(width);
        let y1 = ((self.a.1.max(self.b.1) + r).ceil().max(0.0) as usize).min(height);
        (y0..y1)
            .flat_map(move |y| (x0..x1).map(move |x| (x, y)))
            .filter(move |&(x, y)| self.distance(x as f64 + 0.5, y as f64 + 0.5) <= r)
    }
}

/// Joint positions of one frame in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Joints {
    hip: (f64, f64),
    shoulder: (f64, f64),
    neck_top: (f64, f64),
    head: (f64, f64),
    elbow: [(f64, f64); 2],
    wrist: [(f64, f64); 2],
    knee: [(f64, f64); 2],
    ankle: [(f64, f64); 2],
    toe: [(f64, f64); 2],
    heel: [(f64, f64); 2],
}

/// One rendered frame: body capsules in draw order plus joint positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub capsules: Vec<Capsule>,
    joints: Joints,
    head_radius: f64,
    forward: f64,
}

const LEFT: usize = 0;
const RIGHT: usize = 1;

impl Figure {
    pub fn mask(&self, width: usize, height: usize) -> BinaryMask {
        let mut m = BinaryMask::new(width, height);
        for c in &self.capsules {
            for (x, y) in c.pixels(width, height) {
                m.set(x, y, true);
            }
        }
        m
    }

    /// 25-keypoint pose. Only the eye and ear facing the camera are
    /// reported; keypoints use pixel-index coordinates.
    pub fn keypoints(&self, direction: Direction) -> PoseFrame {
        let j = &self.joints;
        let at = |p: (f64, f64)| Keypoint::new(p.0 - 0.5, p.1 - 0.5, 0.9);
        let hidden = Keypoint::default();
        let r = self.head_radius;
        let f = self.forward;
        let nose = (j.head.0 + f * 0.95 * r, j.head.1 + 0.1 * r);
        let eye = (j.head.0 + f * 0.6 * r, j.head.1 - 0.25 * r);
        let ear = (j.head.0 - f * 0.15 * r, j.head.1);
        // walking rightwards shows the right side of the body
        let right_visible = direction == Direction::LeftToRight;
        let side = |visible: bool, p: (f64, f64)| if visible { at(p) } else { hidden };
        let small_toe = |s: usize| {
            let (t, a) = (j.toe[s], j.ankle[s]);
            (a.0 + 0.8 * (t.0 - a.0), a.1 + 0.8 * (t.1 - a.1))
        };
        let k: [Keypoint; NUM_KEYPOINTS] = [
            at(nose),
            at(j.shoulder),
            at(j.shoulder),
            at(j.elbow[RIGHT]),
            at(j.wrist[RIGHT]),
            at(j.shoulder),
            at(j.elbow[LEFT]),
            at(j.wrist[LEFT]),
            at(j.hip),
            at(j.hip),
            at(j.knee[RIGHT]),
            at(j.ankle[RIGHT]),
            at(j.hip),
            at(j.knee[LEFT]),
            at(j.ankle[LEFT]),
            side(right_visible, eye),
            side(!right_visible, eye),
            side(right_visible, ear),
            side(!right_visible, ear),
            at(j.toe[LEFT]),
            at(small_toe(LEFT)),
            at(j.heel[LEFT]),
            at(j.toe[RIGHT]),
            at(small_toe(RIGHT)),
            at(j.heel[RIGHT]),
        ];
        PoseFrame::new(k).expect("confidences are fixed constants")
    }
}

// nominal proportions as fractions of stature
const THIGH: f64 = 0.245;
const SHANK: f64 = 0.246;
const FOOT: f64 = 0.14;
const TORSO: f64 = 0.288;
const NECK: f64 = 0.05;
const HEAD_R: f64 = 0.062;
const UPPER_ARM: f64 = 0.186;
const FOREARM: f64 = 0.21;
const R_TORSO: f64 = 0.07;
const R_NECK: f64 = 0.028;
const R_UPPER_ARM: f64 = 0.03;
const R_FOREARM: f64 = 0.024;
const R_THIGH: f64 = 0.048;
const R_SHANK: f64 = 0.035;
const R_FOOT: f64 = 0.022;

/// Fraction of the frame height the nominal figure occupies.
const STATURE_FILL: f64 = 0.78;
const GROUND_MARGIN: f64 = 3.0;

pub(super) struct Walker {
    params: GaitStyleParams,
    opts: SequenceOptions,
    stature: f64,
    speed: f64,
    x_start: f64,
    tremor_phase: (f64, f64),
}

fn deg(d: f64) -> f64 {
    d * PI / 180.0
}

fn add(p: (f64, f64), len: f64, angle: f64) -> (f64, f64) {
    // angle from straight down, positive towards the walking direction
    (p.0 + len * angle.sin(), p.1 + len * angle.cos())
}

impl Walker {
    pub(super) fn new(params: &GaitStyleParams, opts: &SequenceOptions, rng: &mut ChaCha8Rng) -> Self {
        let stature = STATURE_FILL * opts.height as f64 * opts.body.stature;
        let leg = stature * (THIGH * opts.body.thigh + SHANK * opts.body.shank);
        let steps_per_cycle = 2.0;
        let mean_step = params.step_length
            * leg
            * match params.dragging_side {
                Some(_) => 1.0 - 0.125 * params.circumduction,
                None => 1.0 - 0.25 * params.circumduction,
            };
        let frames_per_cycle = params.cadence_frames * opts.fps / TARGET_FPS;
        let speed = steps_per_cycle * mean_step / frames_per_cycle;
        let travel = speed * (opts.n_frames.saturating_sub(1)) as f64;
        let x_start = (opts.width as f64 - travel) / 2.0;
        let tremor_phase = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        Self {
            params: params.clone(),
            opts: opts.clone(),
            stature,
            speed,
            x_start,
            tremor_phase,
        }
    }

    fn drags(&self, side: usize) -> f64 {
        match self.params.dragging_side {
            None => self.params.circumduction,
            Some(Side::Left) if side == LEFT => self.params.circumduction,
            Some(Side::Right) if side == RIGHT => self.params.circumduction,
            Some(_) => 0.0,
        }
    }

    pub(super) fn pose_at(&self, t: usize, rng: &mut ChaCha8Rng) -> Figure {
        let p = &self.params;
        let b = &self.opts.body;
        let h = self.stature;
        let tau = t as f64 * TARGET_FPS / self.opts.fps;
        let phase = 2.0 * PI * tau / p.cadence_frames;
        let noise = Normal::new(0.0, deg(self.opts.jitter).max(0.0)).expect("finite sigma");
        let mut jit = || if self.opts.jitter > 0.0 { noise.sample(rng) } else { 0.0 };

        let origin = (0.0, 0.0);
        let mut j = Joints {
            hip: origin,
            ..Joints::default()
        };
        for side in [LEFT, RIGHT] {
            let psi = phase + if side == RIGHT { PI } else { 0.0 };
            let c = self.drags(side);
            let step = p.step_length * (1.0 - 0.25 * c);
            let amp = (step / 2.0).min(0.9).asin();
            let swing = (-psi.sin()).max(0.0).powf(1.5);
            let hip = amp * psi.cos() + deg(45.0) * p.knee_lift * swing + jit();
            let knee = deg(5.0 + 12.0 * c)
                + swing * deg(35.0 + 55.0 * p.knee_lift) * (1.0 - 0.85 * c.min(1.0))
                + jit().abs();
            let shank_angle = hip - knee;
            let plantar = (deg(30.0) * (p.knee_lift - 0.3).max(0.0) + deg(20.0) * c) * swing;
            let foot_angle = -0.5 * shank_angle + plantar;
            j.knee[side] = add(origin, h * THIGH * b.thigh, hip);
            j.ankle[side] = add(j.knee[side], h * SHANK * b.shank, shank_angle);
            let foot = h * FOOT * b.foot;
            let (fx, fy) = (foot_angle.cos(), foot_angle.sin());
            j.toe[side] = (j.ankle[side].0 + foot * fx, j.ankle[side].1 + foot * fy);
            j.heel[side] = (j.ankle[side].0 - 0.25 * foot * fx, j.ankle[side].1 - 0.25 * foot * fy);
        }
        let lean = deg(p.torso_lean_deg) + jit();
        let torso_len = h * TORSO * b.torso;
        j.shoulder = add(origin, torso_len, PI - lean);
        j.neck_top = add(j.shoulder, h * NECK * b.neck, PI - lean * 0.8);
        let head_r = h * HEAD_R * b.head;
        j.head = add(j.neck_top, 0.9 * head_r, PI - lean * 0.6);
        for side in [LEFT, RIGHT] {
            let leg_phase = phase + if side == RIGHT { PI } else { 0.0 };
            let swing = if side == LEFT { p.arm_swing_left } else { p.arm_swing_right };
            let shoulder_angle = -deg(40.0) * swing * leg_phase.cos() + jit();
            let elbow_flex = deg(12.0)
                + deg(25.0) * (p.torso_lean_deg / 25.0).min(1.5)
                + deg(70.0) * (1.0 - swing / 0.3).max(0.0);
            j.elbow[side] = add(j.shoulder, h * UPPER_ARM * b.upper_arm, shoulder_angle);
            let mut wrist = add(j.elbow[side], h * FOREARM * b.forearm, shoulder_angle + elbow_flex);
            if p.shake_amplitude > 0.0 {
                let (a, c) = self.tremor_phase;
                wrist.0 += p.shake_amplitude * (2.0 * PI * 0.37 * tau + a + side as f64).sin();
                wrist.1 += p.shake_amplitude * (2.0 * PI * 0.29 * tau + c).sin();
            }
            j.wrist[side] = wrist;
        }

        // stand on the ground line and move along the walkway
        let r_foot = h * R_FOOT * b.girth;
        let lowest = [j.toe, j.heel, j.ankle]
            .iter()
            .flat_map(|pts| pts.iter().map(|q| q.1))
            .fold(f64::NEG_INFINITY, f64::max)
            + r_foot;
        let dy = self.opts.height as f64 - GROUND_MARGIN - lowest;
        let dx = self.x_start + self.speed * t as f64;
        let (forward, mirror_w) = match self.opts.direction {
            Direction::LeftToRight => (1.0, None),
            Direction::RightToLeft => (-1.0, Some(self.opts.width as f64)),
        };
        let m = |q: (f64, f64)| {
            let x = q.0 + dx;
            (mirror_w.map_or(x, |w| w - x), q.1 + dy)
        };
        let j = Joints {
            hip: m(j.hip),
            shoulder: m(j.shoulder),
            neck_top: m(j.neck_top),
            head: m(j.head),
            elbow: j.elbow.map(m),
            wrist: j.wrist.map(m),
            knee: j.knee.map(m),
            ankle: j.ankle.map(m),
            toe: j.toe.map(m),
            heel: j.heel.map(m),
        };

        let g = b.girth;
        let cap = |a, b2, r: f64, part| Capsule { a, b: b2, radius: r * h, part };
        let mut capsules = Vec::with_capacity(13);
        // far side first: the left side when walking rightwards
        let (far, near) = match self.opts.direction {
            Direction::LeftToRight => (LEFT, RIGHT),
            Direction::RightToLeft => (RIGHT, LEFT),
        };
        for side in [far, near] {
            capsules.push(cap(j.hip, j.knee[side], R_THIGH * g, Part::Trousers));
            capsules.push(cap(j.knee[side], j.ankle[side], R_SHANK * g, Part::Trousers));
            capsules.push(cap(j.heel[side], j.toe[side], R_FOOT * g, Part::Shoes));
        }
        capsules.push(cap(j.shoulder, j.elbow[far], R_UPPER_ARM * g, Part::Shirt));
        capsules.push(cap(j.elbow[far], j.wrist[far], R_FOREARM * g, Part::Skin));
        capsules.push(cap(j.hip, j.shoulder, R_TORSO * g, Part::Shirt));
        capsules.push(cap(j.shoulder, j.neck_top, R_NECK * g, Part::Skin));
        capsules.push(Capsule {
            a: j.head,
            b: j.head,
            radius: head_r,
            part: Part::Skin,
        });
        capsules.push(cap(j.shoulder, j.elbow[near], R_UPPER_ARM * g, Part::Shirt));
        capsules.push(cap(j.elbow[near], j.wrist[near], R_FOREARM * g, Part::Skin));
        Figure {
            capsules,
            joints: j,
            head_radius: head_r,
            forward,
        }
    }
}
