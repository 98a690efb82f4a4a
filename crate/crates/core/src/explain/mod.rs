//! Saliency maps, grad-CAM heatmaps and per-channel feature maps.

mod render;

pub use render::{feature_map_png, gray_png, heat_color, overlay, overlay_png, DEFAULT_OVERLAY_ALPHA};

use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, ConvBlock, Network};
use crate::error::{Error, Result};
use crate::gait_repr::resample_grid;
use crate::tensor::{Mode, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Saliency,
    Gradcam,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "saliency" => Ok(Method::Saliency),
            "gradcam" | "grad-cam" | "grad_cam" => Ok(Method::Gradcam),
            other => Err(Error::InvalidArgument(format!(
                "unknown explanation method {other:?} (saliency, gradcam)"
            ))),
        }
    }
}

/// Input-sized map in `[0, 1]`, max-normalized unless identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub target_class: usize,
    pub method: Method,
    /// Convolution block the map was computed from (grad-CAM only).
    pub source_layer: Option<usize>,
}

impl HeatMap {
    /// Share of the total heat that lies in the lower half of the rows.
    pub fn lower_half_mass(&self) -> f64 {
        let total: f64 = self.values.iter().map(|&v| v as f64).sum();
        if total == 0.0 {
            return 0.0;
        }
        let lower: f64 = self.values[(self.height / 2) * self.width..]
            .iter()
            .map(|&v| v as f64)
            .sum();
        lower / total
    }
}

/// One channel of a layer's activation, min-max normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channel: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

fn input_tensor<T: Real>(net: &Network<T>, pixels: &[T]) -> Result<Tensor<T>> {
    let [h, w, c] = net.config().input_shape;
    if pixels.len() != h * w * c {
        return Err(Error::Shape(format!(
            "image has {} values, the model expects {h}x{w}x{c}",
            pixels.len()
        )));
    }
    Tensor::new(vec![1, h, w, c], pixels.to_vec())
}

fn resolve_target<T: Real>(logits: &Tensor<T>, target: Option<usize>) -> Result<usize> {
    let n = logits.len();
    match target {
        Some(t) if t < n => Ok(t),
        Some(t) => Err(Error::InvalidArgument(format!("target class {t} out of range 0..{n}"))),
        None => Ok(argmax(logits.data())),
    }
}

fn max_normalize(values: Vec<f64>) -> Vec<f32> {
    let peak = values.iter().copied().fold(0.0f64, f64::max);
    if peak > 0.0 {
        values.into_iter().map(|v| (v / peak) as f32).collect()
    } else {
        vec![0.0; values.len()]
    }
}

fn one_hot<T: Real>(n: usize, target: usize, scale: T) -> Result<Tensor<T>> {
    let mut v = vec![T::zero(); n];
    v[target] = scale;
    Tensor::new(vec![1, n], v)
}

/// Gradient of the target logit with respect to every input pixel, in
/// inference mode. Returns the gradient and the resolved target.
pub fn input_gradient<T: Real>(net: &Network<T>, pixels: &[T], target: Option<usize>) -> Result<(Vec<T>, usize)> {
    let x = input_tensor(net, pixels)?;
    let trace = net.forward(&x, Mode::Infer)?;
    let target = resolve_target(trace.logits(), target)?;
    let up = one_hot(trace.logits().len(), target, T::one())?;
    let back = net.backward_from(&trace, net.logits_index(), up)?;
    let g = back.activation_grads[0].clone().expect("input gradient is always produced");
    Ok((g.into_data(), target))
}

/// Pre-softmax score of one class, in inference mode.
pub fn class_score<T: Real>(net: &Network<T>, pixels: &[T], class: usize) -> Result<T> {
    let (logits, _) = net.infer(&input_tensor(net, pixels)?)?;
    logits
        .data()
        .get(class)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("class {class} out of range")))
}

/// `|∂ score / ∂ pixel|`, max-normalized.
pub fn saliency<T: Real>(net: &Network<T>, pixels: &[T], target: Option<usize>) -> Result<HeatMap> {
    let [h, w, _] = net.config().input_shape;
    let (g, target) = input_gradient(net, pixels, target)?;
    let raw = g.iter().map(|v| v.to_f64().unwrap_or(0.0).abs()).collect();
    Ok(HeatMap {
        width: w,
        height: h,
        values: max_normalize(raw),
        target_class: target,
        method: Method::Saliency,
        source_layer: None,
    })
}

fn conv_block<T: Real>(net: &Network<T>, block: usize) -> Result<ConvBlock> {
    let blocks = net.conv_blocks();
    let n = blocks.len();
    blocks.into_iter().nth(block).ok_or_else(|| {
        Error::InvalidArgument(format!("layer {block} is not a convolution layer; valid layers are 0..{n}"))
    })
}

/// Grad-CAM with the target-class gradient scaled by `scale` (1 for the
/// plain method).
pub fn grad_cam_scaled<T: Real>(
    net: &Network<T>,
    pixels: &[T],
    block: usize,
    target: Option<usize>,
    scale: T,
) -> Result<HeatMap> {
    let cb = conv_block(net, block)?;
    let [h, w, _] = net.config().input_shape;
    let x = input_tensor(net, pixels)?;
    let trace = net.forward(&x, Mode::Infer)?;
    let target = resolve_target(trace.logits(), target)?;
    let up = one_hot(trace.logits().len(), target, scale)?;
    let back = net.backward_from(&trace, net.logits_index(), up)?;
    let a = &trace.activations[cb.activation_layer + 1];
    let da = back.activation_grads[cb.activation_layer + 1]
        .as_ref()
        .expect("gradient reaches every activation");
    let (hw, c) = (cb.height * cb.width, cb.channels);
    let (a, da) = (a.data(), da.data());
    let alpha: Vec<f64> = (0..c)
        .map(|k| (0..hw).map(|p| da[p * c + k].to_f64().unwrap_or(0.0)).sum::<f64>() / hw as f64)
        .collect();
    let cam: Vec<f32> = (0..hw)
        .map(|p| {
            let s: f64 = (0..c).map(|k| alpha[k] * a[p * c + k].to_f64().unwrap_or(0.0)).sum();
            s.max(0.0) as f32
        })
        .collect();
    let up = resample_grid(&cam, cb.width, cb.height, w, h);
    Ok(HeatMap {
        width: w,
        height: h,
        values: max_normalize(up.into_iter().map(|v| v.max(0.0) as f64).collect()),
        target_class: target,
        method: Method::Gradcam,
        source_layer: Some(block),
    })
}

/// Grad-CAM over the post-activation maps of convolution block `block`.
pub fn grad_cam<T: Real>(net: &Network<T>, pixels: &[T], block: usize, target: Option<usize>) -> Result<HeatMap> {
    grad_cam_scaled(net, pixels, block, target, T::one())
}

/// Index of the last convolution block.
pub fn last_conv_block<T: Real>(net: &Network<T>) -> Result<usize> {
    net.conv_blocks()
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidArgument("model has no convolution layers".into()))
}

/// Post-activation channel images of convolution block `block`.
pub fn feature_maps<T: Real>(net: &Network<T>, pixels: &[T], block: usize) -> Result<Vec<FeatureMap>> {
    let cb = conv_block(net, block)?;
    let x = input_tensor(net, pixels)?;
    let trace = net.forward_until(&x, Mode::Infer, cb.activation_layer + 1)?;
    let a = trace.output().data();
    let (hw, c) = (cb.height * cb.width, cb.channels);
    Ok((0..c)
        .map(|k| {
            let raw: Vec<f64> = (0..hw).map(|p| a[p * c + k].to_f64().unwrap_or(0.0)).collect();
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let values = if hi > lo {
                raw.iter().map(|&v| ((v - lo) / (hi - lo)) as f32).collect()
            } else {
                vec![0.0; hw]
            };
            FeatureMap {
                channel: k,
                width: cb.width,
                height: cb.height,
                values,
            }
        })
        .collect())
}

/// A single channel of [`feature_maps`].
pub fn feature_map<T: Real>(net: &Network<T>, pixels: &[T], block: usize, channel: usize) -> Result<FeatureMap> {
    let cb = conv_block(net, block)?;
    if channel >= cb.channels {
        return Err(Error::InvalidArgument(format!(
            "channel {channel} out of range; layer {block} has {} channels",
            cb.channels
        )));
    }
    Ok(feature_maps(net, pixels, block)?.swap_remove(channel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ModelConfig;

    fn small() -> Network<f64> {
        Network::<f32>::build(ModelConfig::with_input(32, 32), 5).unwrap().cast()
    }

    fn image(seed: u64) -> Vec<f64> {
        (0..32 * 32)
            .map(|i| (((i as u64 * 2654435761 + seed) % 1000) as f64) / 1000.0)
            .collect()
    }

    #[test]
    fn method_parsing() {
        assert_eq!("gradcam".parse::<Method>().unwrap(), Method::Gradcam);
        assert_eq!("Saliency".parse::<Method>().unwrap(), Method::Saliency);
        assert!("occlusion".parse::<Method>().is_err());
    }

    #[test]
    fn saliency_is_normalized_and_deterministic() {
        let net = small();
        let a = saliency(&net, &image(1), None).unwrap();
        let b = saliency(&net, &image(1), None).unwrap();
        assert_eq!(a, b);
        let peak = a.values.iter().copied().fold(0f32, f32::max);
        assert!((peak - 1.0).abs() < 1e-6);
        assert!(a.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn grad_cam_bounds_and_layer_checks() {
        let net = small();
        let m = grad_cam(&net, &image(2), 4, Some(1)).unwrap();
        assert_eq!((m.width, m.height, m.source_layer), (32, 32, Some(4)));
        assert!(m.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(grad_cam(&net, &image(2), 5, None).is_err());
        assert!(grad_cam(&net, &image(2), 0, Some(9)).is_err());
    }

    #[test]
    fn feature_map_counts_follow_filters() {
        let net = small();
        for (block, want) in [32, 32, 32, 64, 64].into_iter().enumerate() {
            assert_eq!(feature_maps(&net, &image(3), block).unwrap().len(), want);
        }
        assert!(feature_map(&net, &image(3), 0, 32).is_err());
    }

    #[test]
    fn zero_gradient_gives_zero_map() {
        assert_eq!(max_normalize(vec![0.0; 4]), vec![0.0; 4]);
    }
}
