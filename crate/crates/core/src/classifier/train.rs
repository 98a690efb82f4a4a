use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Layer, Network};
use crate::error::{Error, Result};
use crate::tensor::{
    cross_entropy_loss, softmax_cross_entropy_grad, Mode, NadamConfig, NadamState, Tensor,
};

/// One labeled training or evaluation image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Row-major `height × width` grayscale values in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub label: usize,
    /// Subject number (1-based, `S1`, `S2`, …).
    pub subject: u32,
    /// Set for a repeated recording of an already-present subject.
    pub repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without training-loss improvement before stopping.
    pub patience: usize,
    /// Smallest decrease that counts as an improvement.
    pub min_delta: f64,
    pub seed: u64,
    /// Re-estimate batch-norm statistics over the full training set once
    /// training ends.
    pub recalibrate_batchnorm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            min_delta: 1e-4,
            seed: 0,
            recalibrate_batchnorm: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub stopped_early: bool,
}

/// Stacks sample images into an `N×H×W×1` batch.
pub fn batch_tensor(samples: &[&Sample], height: usize, width: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(samples.len() * height * width);
    for s in samples {
        if s.pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "sample has {} pixels, network expects {height}×{width}",
                s.pixels.len()
            )));
        }
        data.extend_from_slice(&s.pixels);
    }
    Tensor::new(vec![samples.len(), height, width, 1], data)
}

pub fn train(net: &mut Network<f32>, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(net, samples, cfg, |_| {})
}

/// Mini-batch training with categorical cross-entropy and Nadam; calls
/// `on_epoch` after every epoch.
pub fn train_with(
    net: &mut Network<f32>,
    samples: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let classes = net.config().num_classes;
    if let Some(bad) = samples.iter().find(|s| s.label >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {} outside 0..{classes}",
            bad.label
        )));
    }
    let [h, w, _] = net.config().input_shape;
    let mut optimizer = NadamState::<f32>::new(
        NadamConfig {
            learning_rate: cfg.learning_rate,
            ..Default::default()
        },
        net.learnable_count(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;
    let logits_at = net.logits_index();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let targets: Vec<usize> = batch.iter().map(|s| s.label).collect();
            let x = batch_tensor(&batch, h, w)?;
            let seed = cfg.seed ^ ((epoch as u64) << 32) ^ b as u64;
            let trace = net.forward(&x, Mode::Train { seed })?;
            let probs = trace.output();
            for (row, &t) in probs.data().chunks_exact(classes).zip(&targets) {
                loss_sum += cross_entropy_loss(row, t)?;
                if argmax(row) == t {
                    correct += 1;
                }
            }
            let upstream = softmax_cross_entropy_grad(probs, &targets)?;
            let grads = net.backward_from(&trace, logits_at, upstream)?;
            net.attach_grads(&grads)?;
            optimizer.step(&mut net.params_mut())?;
            net.update_running_stats(&trace);
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / samples.len() as f64,
            accuracy: correct as f64 / samples.len() as f64,
        };
        if !stats.loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: stats.loss,
            });
        }
        on_epoch(&stats);
        history.push(stats);
        if stats.loss < best - cfg.min_delta {
            best = stats.loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    for p in net.params_mut() {
        p.clear_grad();
    }
    if cfg.recalibrate_batchnorm {
        recalibrate_batchnorm(net, samples)?;
    }
    Ok(TrainReport {
        history,
        stopped_early,
    })
}

/// Replaces every batch-norm layer's running statistics by the exact
/// population mean and variance of its input over `samples`, layer by layer
/// so each estimate sees the already-recalibrated layers before it.
pub fn recalibrate_batchnorm(net: &mut Network<f32>, samples: &[Sample]) -> Result<()> {
    const CHUNK: usize = 16;
    let [h, w, _] = net.config().input_shape;
    let bn_layers: Vec<usize> = net
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, Layer::BatchNorm(_)))
        .map(|(i, _)| i)
        .collect();
    for idx in bn_layers {
        let channels = match &net.layers()[idx] {
            Layer::BatchNorm(b) => b.channels(),
            _ => unreachable!(),
        };
        let mut sum = vec![0f64; channels];
        let mut sq = vec![0f64; channels];
        let mut count = 0usize;
        for chunk in samples.chunks(CHUNK) {
            let batch: Vec<&Sample> = chunk.iter().collect();
            let x = batch_tensor(&batch, h, w)?;
            let trace = net.forward_until(&x, Mode::Infer, idx)?;
            let act = trace.output();
            for row in act.data().chunks_exact(channels) {
                for ch in 0..channels {
                    let v = row[ch] as f64;
                    sum[ch] += v;
                    sq[ch] += v * v;
                }
            }
            count += act.len() / channels;
        }
        let n = count as f64;
        if let Layer::BatchNorm(b) = &mut net.layers_mut()[idx] {
            for ch in 0..channels {
                let mean = sum[ch] / n;
                let var = (sq[ch] / n - mean * mean).max(0.0);
                b.running_mean.data_mut()[ch] = mean as f32;
                b.running_var.data_mut()[ch] = var as f32;
            }
        }
    }
    Ok(())
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
