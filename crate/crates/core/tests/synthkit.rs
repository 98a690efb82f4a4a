mod common;

use common::{small_dataset, synth_samples};
use gaitworks_core::gait_repr::{cycle_records, load_manifest, EnergyKind, SequenceMeta, TARGET_FPS};
use gaitworks_core::synthkit::*;
use gaitworks_core::{GaitClass, Severity, NUM_CLASSES};
use std::collections::BTreeMap;
use std::path::Path;

fn presets() -> Vec<(GaitClass, Severity)> {
    let mut out = vec![(GaitClass::Normal, Severity::Na)];
    for class in GaitClass::ALL.into_iter().filter(|&c| c != GaitClass::Normal) {
        out.push((class, Severity::Sev1));
        out.push((class, Severity::Sev2));
    }
    out
}

#[test]
fn preset_traits() {
    let hemi = preset(GaitClass::Hemiplegic, Severity::Sev1);
    assert_eq!(hemi.arm_swing_right, 0.0);
    assert!(hemi.arm_swing_left > 0.0);

    let normal = preset(GaitClass::Normal, Severity::Na);
    assert_eq!(normal.torso_lean_deg, 0.0);
    assert_eq!(normal.arm_swing_left, normal.arm_swing_right);
    assert_eq!(preset(GaitClass::Normal, Severity::Sev2), normal);

    let p1 = preset(GaitClass::Parkinsonian, Severity::Sev1);
    let p2 = preset(GaitClass::Parkinsonian, Severity::Sev2);
    assert!(p2.cadence_frames < p1.cadence_frames && p1.cadence_frames < normal.cadence_frames);
    assert!(p1.step_length < normal.step_length);

    let d = preset(GaitClass::Diplegic, Severity::Sev1);
    assert!(d.torso_lean_deg > 0.0 && d.circumduction > 0.0 && d.dragging_side.is_none());
    assert!(preset(GaitClass::Neuropathic, Severity::Sev1).knee_lift > normal.knee_lift);

    for (c, s) in presets() {
        preset(c, s).validate().unwrap();
    }
}

#[test]
fn invalid_params_are_rejected() {
    let mut p = preset(GaitClass::Normal, Severity::Na);
    p.cadence_frames = 50.0;
    assert!(p.validate().is_err());
    let mut p = preset(GaitClass::Normal, Severity::Na);
    p.step_length = 2.0;
    assert!(generate_sequence(&p, 10, (360, 128), 0, 0.0).is_err());
    let ok = preset(GaitClass::Normal, Severity::Na);
    assert!(generate_sequence(&ok, 10, (40, 30), 0, 0.0).is_err());
    assert!(generate_sequence(&ok, 0, (360, 128), 0, 0.0).is_err());
}

#[test]
fn sixty_frames_at_cadence_twenty_hold_three_cycles() {
    let mut p = preset(GaitClass::Normal, Severity::Na);
    p.cadence_frames = 20.0;
    let seq = generate_sequence(&p, 60, (360, 128), 1, 0.0).unwrap();
    assert_eq!(seq.cycles.len(), 3);
    for (k, c) in seq.cycles.iter().enumerate() {
        assert_eq!((c.start_frame, c.end_frame), (20 * k, 20 * k + 19));
    }
}

#[test]
fn same_seed_is_bit_identical() {
    let p = preset(GaitClass::Diplegic, Severity::Sev2);
    let a = generate_sequence(&p, 25, (360, 128), 9, 0.7).unwrap();
    let b = generate_sequence(&p, 25, (360, 128), 9, 0.7).unwrap();
    assert_eq!(a.masks, b.masks);
    assert_eq!(a.poses, b.poses);
    assert_eq!(a.color_frames(2.0, 4), b.color_frames(2.0, 4));
    let c = generate_sequence(&p, 25, (360, 128), 10, 0.7).unwrap();
    assert_ne!(a.masks, c.masks);
}

#[test]
fn poses_expose_twenty_five_keypoints() {
    let seq = generate_sequence(&preset(GaitClass::Normal, Severity::Na), 5, (360, 128), 1, 0.0).unwrap();
    for pose in &seq.poses {
        assert_eq!(pose.keypoints().len(), 25);
        assert!(pose.confident_count() >= 13);
        assert!(pose.keypoints().iter().all(|k| (0.0..=1.0).contains(&k.confidence)));
    }
}

#[test]
fn cadence_is_recovered_for_every_zero_jitter_preset() {
    for (class, severity) in presets() {
        let p = preset(class, severity);
        for seed in 0..3 {
            let seq = generate_sequence(&p, 80, (360, 128), seed, 0.0).unwrap();
            let records = cycle_records(&seq.masks).unwrap();
            assert!(!records.is_empty(), "{class:?} {severity:?} seed {seed}: no cycles");
            for r in &records {
                let len = r.frames.len() as f64;
                assert!(
                    (len - p.cadence_frames).abs() <= 1.0,
                    "{class:?} {severity:?} seed {seed}: cycle {len} vs cadence {}",
                    p.cadence_frames
                );
            }
        }
    }
}

#[test]
fn higher_frame_rates_are_resampled_before_detection() {
    let p = preset(GaitClass::Normal, Severity::Na);
    let opts = SequenceOptions { n_frames: 200, fps: 30.0, seed: 2, ..SequenceOptions::default() };
    let seq = generate_sequence_with(&p, &opts).unwrap();
    assert!((seq.cadence_source_frames() - 3.0 * p.cadence_frames).abs() < 1e-9);
    for r in cycle_records(&seq.masks).unwrap() {
        assert!((r.frames.len() as f64 - p.cadence_frames).abs() <= 1.0);
    }
    assert_eq!(TARGET_FPS, 10.0);
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn fifty_sequence_manifest_and_distinct_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, truth) = generate_dataset(dir.path(), &small_dataset(5, 2, 3)).unwrap();
    assert_eq!(manifest.sequences.len(), 50);
    assert_eq!(load_manifest(dir.path()).unwrap(), manifest);
    assert_eq!(manifest.subjects(), vec![1, 2, 3, 4, 5]);
    for class in GaitClass::ALL {
        assert_eq!(manifest.sequences.iter().filter(|s| s.class == class).count(), 10);
    }
    for (i, a) in truth.subjects.iter().enumerate() {
        for b in &truth.subjects[i + 1..] {
            assert_ne!(a.body, b.body, "subjects {} and {}", a.subject, b.subject);
        }
    }
    for s in &truth.subjects {
        for v in [s.body.thigh, s.body.shank, s.body.stature] {
            assert!((0.9..=1.1).contains(&v));
        }
    }
    let entry = &manifest.sequences[0];
    let seq_dir = dir.path().join(&entry.path);
    let sidecar: SequenceTruth = serde_json::from_slice(&std::fs::read(seq_dir.join(TRUTH_FILE)).unwrap()).unwrap();
    assert_eq!(sidecar.class, entry.class);
    assert!(!sidecar.cycles.is_empty());
    let meta: SequenceMeta = entry.meta();
    assert_eq!(meta.subject, entry.subject);
    assert!(generate_dataset(dir.path(), &small_dataset(1, 1, 3)).is_err());
}

#[test]
fn regeneration_is_bit_identical() {
    let opts = DatasetOptions { write_frames: true, write_energy: true, ..small_dataset(2, 1, 44) };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_dataset(a.path(), &opts).unwrap();
    generate_dataset(b.path(), &opts).unwrap();
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert!(ta.keys().any(|k| k.ends_with(BACKGROUND_FILE)));
    assert!(ta.keys().any(|k| k.contains("gei_cycle_")));
    assert_eq!(ta, tb);
}

fn mean_of(images: &[&Vec<f32>]) -> Vec<f64> {
    let mut acc = vec![0.0; images[0].len()];
    for img in images {
        for (a, &v) in acc.iter_mut().zip(img.iter()) {
            *a += v as f64;
        }
    }
    acc.iter().map(|a| a / images.len() as f64).collect()
}

fn l1(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| (x - y as f64).abs()).sum::<f64>() / a.len() as f64
}

#[test]
fn classes_are_separable() {
    let train = synth_samples(&small_dataset(8, 1, 5), EnergyKind::Gei, 224);
    let test = synth_samples(&DatasetOptions { first_subject: 20, ..small_dataset(2, 1, 6) }, EnergyKind::Gei, 224);
    let means: Vec<Vec<f64>> = (0..NUM_CLASSES)
        .map(|c| mean_of(&train.iter().filter(|s| s.label == c).map(|s| &s.pixels).collect::<Vec<_>>()))
        .collect();

    // spread of samples around their own class mean vs distance between means
    let within = train.iter().map(|s| l1(&means[s.label], &s.pixels)).sum::<f64>() / train.len() as f64;
    let mut between = 0.0;
    let mut pairs = 0;
    for i in 0..NUM_CLASSES {
        for j in i + 1..NUM_CLASSES {
            let mj: Vec<f32> = means[j].iter().map(|&v| v as f32).collect();
            between += l1(&means[i], &mj);
            pairs += 1;
        }
    }
    between /= pairs as f64;
    assert!(between > within, "between {between} within {within}");

    let correct = test
        .iter()
        .filter(|s| {
            let best = (0..NUM_CLASSES)
                .min_by(|&a, &b| l1(&means[a], &s.pixels).total_cmp(&l1(&means[b], &s.pixels)))
                .unwrap();
            best == s.label
        })
        .count();
    let acc = correct as f64 / test.len() as f64;
    assert!(acc > 0.6, "nearest-class-mean accuracy {acc}");
}

#[test]
fn green_screen_frames_and_background() {
    let seq = generate_sequence(&preset(GaitClass::Normal, Severity::Na), 3, (360, 128), 1, 0.0).unwrap();
    let bg = seq.background(0.0, 0);
    assert!(bg.pixels.chunks_exact(3).all(|p| p == BACKGROUND_RGB));
    let frames = seq.color_frames(0.0, 0);
    assert_eq!(frames.len(), 3);
    for (f, m) in frames.iter().zip(&seq.masks.masks) {
        for (i, px) in f.pixels.chunks_exact(3).enumerate() {
            let inside = m.bits()[i];
            assert_eq!(px != BACKGROUND_RGB, inside);
        }
    }
}
