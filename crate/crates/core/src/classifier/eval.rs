use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, Network};
use super::train::{argmax, train, Sample, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::labels::{GaitClass, NUM_CLASSES};
use crate::par;
use crate::tensor::Tensor;

/// Class probabilities for one image and the winning class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f32>,
    pub label: GaitClass,
}

impl Prediction {
    pub fn from_probabilities(probabilities: Vec<f32>) -> Result<Self> {
        let label = GaitClass::from_index(argmax(&probabilities))?;
        Ok(Self {
            probabilities,
            label,
        })
    }
}

/// Predicts a batch of `height × width` images in inference mode.
pub fn predict_batch(net: &Network<f32>, images: &[&[f32]]) -> Result<Vec<Prediction>> {
    const CHUNK: usize = 16;
    let [h, w, _] = net.config().input_shape;
    let k = net.config().num_classes;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(CHUNK) {
        let mut data = Vec::with_capacity(chunk.len() * h * w);
        for img in chunk {
            if img.len() != h * w {
                return Err(Error::Shape(format!(
                    "image has {} pixels, model expects {h}×{w}",
                    img.len()
                )));
            }
            data.extend_from_slice(img);
        }
        let x = Tensor::new(vec![chunk.len(), h, w, 1], data)?;
        let (_, probs) = net.infer(&x)?;
        for row in probs.data().chunks_exact(k) {
            out.push(Prediction::from_probabilities(row.to_vec())?);
        }
    }
    Ok(out)
}

pub fn predict(net: &Network<f32>, image: &[f32]) -> Result<Prediction> {
    Ok(predict_batch(net, &[image])?.remove(0))
}

/// Accuracy figures and confusion matrix over the five classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub accuracy: f64,
    /// `None` for classes absent from the evaluated set.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `counts[true][predicted]`
    pub confusion_counts: Vec<Vec<u64>>,
    /// Row-normalized confusion matrix; empty rows stay zero.
    pub confusion: Vec<Vec<f64>>,
}

impl Metrics {
    pub fn from_labels(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut counts = vec![vec![0u64; NUM_CLASSES]; NUM_CLASSES];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= NUM_CLASSES || p >= NUM_CLASSES {
                return Err(Error::InvalidArgument(format!("label pair ({t}, {p}) out of range")));
            }
            counts[t][p] += 1;
        }
        Ok(Self::from_counts(counts))
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let total: u64 = counts.iter().flatten().sum();
        let diag: u64 = (0..counts.len()).map(|i| counts[i][i]).sum();
        let mut per_class = Vec::with_capacity(counts.len());
        let mut confusion = Vec::with_capacity(counts.len());
        for (i, row) in counts.iter().enumerate() {
            let n: u64 = row.iter().sum();
            if n == 0 {
                per_class.push(None);
                confusion.push(vec![0.0; row.len()]);
            } else {
                per_class.push(Some(row[i] as f64 / n as f64));
                confusion.push(row.iter().map(|&c| c as f64 / n as f64).collect());
            }
        }
        Self {
            samples: total as usize,
            accuracy: if total == 0 { 0.0 } else { diag as f64 / total as f64 },
            per_class_accuracy: per_class,
            confusion_counts: counts,
            confusion,
        }
    }

    /// Sums the raw counts of several evaluations.
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a Metrics>) -> Self {
        let mut counts = vec![vec![0u64; NUM_CLASSES]; NUM_CLASSES];
        for m in parts {
            for (acc, row) in counts.iter_mut().zip(&m.confusion_counts) {
                for (a, &c) in acc.iter_mut().zip(row) {
                    *a += c;
                }
            }
        }
        Self::from_counts(counts)
    }
}

/// Evaluation outcome plus the mean per-sample inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub predictions: Vec<usize>,
    pub mean_latency_ms: f64,
}

pub fn evaluate(net: &Network<f32>, samples: &[Sample]) -> Result<Evaluation> {
    let images: Vec<&[f32]> = samples.iter().map(|s| s.pixels.as_slice()).collect();
    let started = Instant::now();
    let preds = predict_batch(net, &images)?;
    let elapsed = started.elapsed().as_secs_f64() * 1e3;
    let predicted: Vec<usize> = preds.iter().map(|p| p.label.index()).collect();
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    Ok(Evaluation {
        metrics: Metrics::from_labels(&truth, &predicted)?,
        predictions: predicted,
        mean_latency_ms: if samples.is_empty() {
            0.0
        } else {
            elapsed / samples.len() as f64
        },
    })
}

/// Subject-wise test partitions of the 21-subject protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// Test subjects of fold `k + 1`.
    pub folds: Vec<[u32; 3]>,
}

pub const PROTOCOL_SUBJECTS: u32 = 21;

/// Fold `k` (1-based) tests subjects `2k−1, 2k, 2k+1`.
pub fn make_folds(n_subjects: u32) -> Result<FoldPlan> {
    if n_subjects != PROTOCOL_SUBJECTS {
        return Err(Error::InvalidArgument(format!(
            "the fold protocol is defined for {PROTOCOL_SUBJECTS} subjects, got {n_subjects}"
        )));
    }
    let folds = (1..=10u32)
        .map(|k| {
            let i = 2 * k - 1;
            [i, i + 1, i + 2]
        })
        .collect();
    Ok(FoldPlan { folds })
}

impl FoldPlan {
    pub fn all_subjects(&self) -> BTreeSet<u32> {
        self.folds.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subjects: Vec<u32>,
    pub train_subjects: Vec<u32>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub metrics: Metrics,
    pub final_train_loss: f64,
    pub epochs: usize,
    pub mean_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub pooled: Metrics,
}

/// Splits samples into (train, test) by subject, asserting no subject
/// appears on both sides.
pub fn split_by_subject<'a>(
    samples: &'a [Sample],
    test_subjects: &[u32],
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let (test, train): (Vec<&'a Sample>, Vec<&'a Sample>) =
        samples.iter().partition(|s| test_subjects.contains(&s.subject));
    let train_ids: BTreeSet<u32> = train.iter().map(|s| s.subject).collect();
    if test.iter().any(|s| train_ids.contains(&s.subject)) {
        return Err(Error::Dataset("subject leaked into both train and test".into()));
    }
    Ok((
        train.into_iter().cloned().collect(),
        test.into_iter().cloned().collect(),
    ))
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Subject-wise 10-fold cross-validation; each fold trains from scratch.
pub fn cross_validate(
    samples: &[Sample],
    model: &ModelConfig,
    cfg: &TrainConfig,
    plan: &FoldPlan,
) -> Result<CrossValReport> {
    let present: BTreeSet<u32> = samples.iter().map(|s| s.subject).collect();
    let missing: Vec<u32> = plan.all_subjects().difference(&present).copied().collect();
    if !missing.is_empty() {
        return Err(Error::Dataset(format!(
            "subjects {missing:?} are missing from the dataset"
        )));
    }
    cfg.validate()?;
    model.shapes()?;

    let results = par::map_range(plan.folds.len(), |k| -> Result<FoldResult> {
        let test_subjects = plan.folds[k].to_vec();
        let (train_set, test_set) = split_by_subject(samples, &test_subjects)?;
        let fold_cfg = TrainConfig {
            seed: fold_seed(cfg.seed, k),
            ..cfg.clone()
        };
        let mut net = Network::build(model.clone(), fold_cfg.seed)?;
        let report: TrainReport = train(&mut net, &train_set, &fold_cfg)?;
        let eval = evaluate(&net, &test_set)?;
        let train_subjects: BTreeSet<u32> = train_set.iter().map(|s| s.subject).collect();
        Ok(FoldResult {
            fold: k + 1,
            test_subjects,
            train_subjects: train_subjects.into_iter().collect(),
            train_samples: train_set.len(),
            test_samples: test_set.len(),
            metrics: eval.metrics,
            final_train_loss: report.history.last().map_or(f64::NAN, |e| e.loss),
            epochs: report.history.len(),
            mean_latency_ms: eval.mean_latency_ms,
        })
    });
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mean_accuracy = folds.iter().map(|f| f.metrics.accuracy).sum::<f64>() / folds.len() as f64;
    let pooled = Metrics::pooled(folds.iter().map(|f| &f.metrics));
    Ok(CrossValReport {
        folds,
        mean_accuracy,
        pooled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDatasetReport {
    pub train_samples: usize,
    pub test_samples: usize,
    pub metrics: Metrics,
    pub history: TrainReport,
    pub mean_latency_ms: f64,
}

/// Trains once on `train_set` and evaluates on the disjoint `test_set`.
/// With `dedupe_repeats`, repeated recordings are dropped from training.
pub fn cross_dataset_eval(
    train_set: &[Sample],
    test_set: &[Sample],
    model: &ModelConfig,
    cfg: &TrainConfig,
    dedupe_repeats: bool,
) -> Result<(Network<f32>, CrossDatasetReport)> {
    let k = model.num_classes;
    if k != NUM_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "label space mismatch: model has {k} classes, datasets use {NUM_CLASSES}"
        )));
    }
    if let Some(s) = train_set.iter().chain(test_set).find(|s| s.label >= k) {
        return Err(Error::InvalidArgument(format!(
            "label space mismatch: label {} outside 0..{k}",
            s.label
        )));
    }
    let train_set: Vec<Sample> = train_set
        .iter()
        .filter(|s| !(dedupe_repeats && s.repeat))
        .cloned()
        .collect();
    let mut net = Network::build(model.clone(), cfg.seed)?;
    let history = train(&mut net, &train_set, cfg)?;
    let eval = evaluate(&net, test_set)?;
    Ok((
        net,
        CrossDatasetReport {
            train_samples: train_set.len(),
            test_samples: test_set.len(),
            metrics: eval.metrics,
            history,
            mean_latency_ms: eval.mean_latency_ms,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_follow_protocol() {
        let plan = make_folds(21).unwrap();
        assert_eq!(plan.folds.len(), 10);
        assert_eq!(plan.folds[0], [1, 2, 3]);
        assert_eq!(plan.folds[9], [19, 20, 21]);
        assert_eq!(plan.all_subjects(), (1..=21).collect());
        assert!(make_folds(20).is_err());
    }

    #[test]
    fn confusion_rows_normalize() {
        let m = Metrics::from_labels(&[0, 0, 1, 3, 3, 3], &[0, 1, 1, 3, 3, 0]).unwrap();
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
        for (i, row) in m.confusion.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if m.per_class_accuracy[i].is_some() {
                assert!((s - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(s, 0.0);
            }
        }
        assert_eq!(m.per_class_accuracy[2], None);
    }

    #[test]
    fn pooled_counts_add() {
        let a = Metrics::from_labels(&[0, 1], &[0, 1]).unwrap();
        let b = Metrics::from_labels(&[2], &[4]).unwrap();
        let p = Metrics::pooled([&a, &b]);
        assert_eq!(p.samples, 3);
        assert!((p.accuracy - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_subject_fails_before_training() {
        let samples: Vec<Sample> = (1..=20)
            .map(|s| Sample {
                pixels: vec![0.0; 4],
                label: 0,
                subject: s,
                repeat: false,
            })
            .collect();
        let cfg = ModelConfig::with_input(2, 2);
        let err = cross_validate(&samples, &cfg, &TrainConfig::default(), &make_folds(21).unwrap())
            .unwrap_err();
        assert!(err.to_string().contains("21"));
    }
}
