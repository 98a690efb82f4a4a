#![allow(dead_code)]

use gaitworks_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Relative disagreement with a floor so that two tiny numbers compare as
/// equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}

/// Indices to probe: all of a short vector, otherwise a seeded sample.
pub fn probe_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    let mut r = rng(seed);
    (0..count).map(|_| r.random_range(0..len)).collect()
}

use gaitworks_core::classifier::Sample;
use gaitworks_core::gait_repr::{load_samples, resample_grid, EnergyKind, ENERGY_SIZE};
use gaitworks_core::synthkit::{generate_dataset, DatasetOptions};

/// Energy-image samples from a freshly generated synthetic dataset,
/// downsampled to `side × side` for fast training.
pub fn synth_samples(opts: &DatasetOptions, kind: EnergyKind, side: usize) -> Vec<Sample> {
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(dir.path(), opts).unwrap();
    let mut samples = load_samples(dir.path(), kind).unwrap();
    if side != ENERGY_SIZE {
        for s in &mut samples {
            s.pixels = resample_grid(&s.pixels, ENERGY_SIZE, ENERGY_SIZE, side, side);
        }
    }
    samples
}

pub fn small_dataset(n_subjects: usize, seqs_per_class: usize, seed: u64) -> DatasetOptions {
    DatasetOptions {
        n_subjects,
        seqs_per_class,
        seed,
        write_frames: false,
        write_energy: false,
        ..DatasetOptions::default()
    }
}

use gaitworks_core::gait_repr::{cycle_energy_images, PipelineInput};
use gaitworks_core::synthkit::{generate_sequence_with, preset, Anthropometrics, GaitStyleParams, SequenceOptions};
use gaitworks_core::{GaitClass, Severity};

fn walk_geis(params: &GaitStyleParams, body: Anthropometrics, seed: u64) -> Vec<Vec<f32>> {
    let opts = SequenceOptions {
        n_frames: 50,
        seed,
        jitter: 0.5,
        body,
        ..SequenceOptions::default()
    };
    let seq = generate_sequence_with(params, &opts).unwrap();
    cycle_energy_images(&PipelineInput::silhouettes(seq.masks))
        .unwrap()
        .into_iter()
        .map(|e| e.into_data())
        .collect()
}

/// Upper image half from `upper`, lower half from `lower`.
fn splice(upper: &[f32], lower: &[f32]) -> Vec<f32> {
    let half = upper.len() / 2;
    let mut g = upper.to_vec();
    g[half..].copy_from_slice(&lower[half..]);
    g
}

/// Two classes that differ only in the lower image half. Every GEI is
/// spliced at the middle row: the upper half always comes from a plain
/// walk, the lower half from another plain walk (labelled normal) or from
/// the same body with a high knee lift (labelled neuropathic). Returns GEIs
/// at `side × side`.
pub fn legs_only_samples(seqs_per_class: usize, seed: u64, side: usize) -> Vec<Sample> {
    let plain = preset(GaitClass::Normal, Severity::Na);
    let mut lifted = plain.clone();
    lifted.knee_lift = 0.9;
    let mut r = rng(seed);
    let mut out = Vec::new();
    for i in 0..seqs_per_class {
        let body = Anthropometrics::sample(&mut r);
        let base = seed * 1000 + i as u64 * 4;
        let lowers = [(walk_geis(&plain, body, base), GaitClass::Normal), (walk_geis(&lifted, body, base + 1), GaitClass::Neuropathic)];
        for (k, (lower, class)) in lowers.iter().enumerate() {
            let upper = walk_geis(&plain, body, base + 2 + k as u64);
            for (u, l) in upper.iter().zip(lower) {
                let g = splice(u, l);
                let pixels = if side == ENERGY_SIZE { g } else { resample_grid(&g, ENERGY_SIZE, ENERGY_SIZE, side, side) };
                out.push(Sample { pixels, label: class.index(), subject: i as u32 + 1, repeat: false });
            }
        }
    }
    out
}
