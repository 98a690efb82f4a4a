use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::NUM_CLASSES;
use crate::tensor::{
    dense_backward, dropout_backward, dropout_forward, relu_backward, relu_forward, softmax,
    BatchNorm, BatchNormCache, Conv2d, Dense, DropoutMask, LayerKind, LayerSpec, Mode, Real,
    Tensor,
};

/// Layer plan plus input geometry of a classifier network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `[height, width, channels]`
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

/// Filters of the five stride-2 convolution blocks.
pub const FILTER_PLAN: [usize; 5] = [32, 32, 32, 64, 64];
pub const INPUT_SIZE: usize = 224;

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_input(INPUT_SIZE, INPUT_SIZE)
    }
}

impl ModelConfig {
    /// The gait CNN's layer plan over an arbitrary input size: five
    /// conv → batch norm → ReLU blocks, then a 512-unit ReLU dense layer,
    /// dropout 0.5 and a softmax over the classes.
    pub fn with_input(height: usize, width: usize) -> Self {
        let mut layers = Vec::new();
        for filters in FILTER_PLAN {
            layers.push(LayerSpec::Conv2d {
                filters,
                kernel_size: 3,
                stride: 2,
            });
            layers.push(LayerSpec::BatchNorm);
            layers.push(LayerSpec::Relu);
        }
        layers.extend([
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 512 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { units: NUM_CLASSES },
            LayerSpec::Softmax,
        ]);
        Self {
            input_shape: [height, width, 1],
            num_classes: NUM_CLASSES,
            layers,
        }
    }

    /// Shape (without batch) flowing out of every layer, validating the plan.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut cur = self.input_shape.to_vec();
        if cur.contains(&0) {
            return Err(Error::InvalidArgument(format!("input shape {cur:?}")));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            cur = match (*l, cur.as_slice()) {
                (LayerSpec::Conv2d { filters, stride, .. }, [h, w, _]) => {
                    vec![h.div_ceil(stride), w.div_ceil(stride), filters]
                }
                (LayerSpec::Conv2d { .. }, _) => {
                    return Err(Error::InvalidArgument(format!(
                        "layer {i}: conv2d needs a spatial input, got {cur:?}"
                    )))
                }
                (LayerSpec::Flatten, s) => vec![s.iter().product()],
                (LayerSpec::Dense { units }, [_]) => vec![units],
                (LayerSpec::Dense { .. }, _) => {
                    return Err(Error::InvalidArgument(format!(
                        "layer {i}: dense needs a flattened input, got {cur:?}"
                    )))
                }
                (LayerSpec::Softmax, s) if i + 1 != self.layers.len() || s.len() != 1 => {
                    return Err(Error::InvalidArgument(
                        "softmax must be the final layer over a vector".into(),
                    ))
                }
                (_, s) => s.to_vec(),
            };
            out.push(cur.clone());
        }
        match (self.layers.last(), out.last()) {
            (Some(LayerSpec::Softmax), Some(s)) if s == &[self.num_classes] => Ok(out),
            _ => Err(Error::InvalidArgument(format!(
                "plan must end in a softmax over {} classes",
                self.num_classes
            ))),
        }
    }

    /// Indices of layers that have learnable parameters, with their counts
    /// `(learnable, running statistics)`.
    pub fn parameter_table(&self) -> Result<Vec<LayerParams>> {
        let shapes = self.shapes()?;
        let mut table = Vec::with_capacity(self.layers.len());
        let mut prev = self.input_shape.to_vec();
        for (i, (l, s)) in self.layers.iter().zip(&shapes).enumerate() {
            let (learnable, running) = match *l {
                LayerSpec::Conv2d {
                    filters,
                    kernel_size,
                    ..
                } => {
                    let c = prev[prev.len() - 1];
                    (kernel_size * kernel_size * c * filters + filters, 0)
                }
                LayerSpec::BatchNorm => {
                    let c = prev[prev.len() - 1];
                    (2 * c, 2 * c)
                }
                LayerSpec::Dense { units } => (prev[0] * units + units, 0),
                _ => (0, 0),
            };
            table.push(LayerParams {
                index: i,
                kind: l.kind(),
                output_shape: s.clone(),
                learnable,
                running,
            });
            prev = s.clone();
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerParams {
    pub index: usize,
    pub kind: LayerKind,
    pub output_shape: Vec<usize>,
    pub learnable: usize,
    pub running: usize,
}

/// A convolution block as seen by the explanation tools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    /// Position among the convolution layers (0-based).
    pub index: usize,
    /// Layer whose output is the block's post-activation feature map.
    pub activation_layer: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Conv2d(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Relu,
    Flatten,
    Dense(Dense<T>),
    Dropout(f64),
    Softmax,
}

/// A feed-forward network built from a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    config: ModelConfig,
    layers: Vec<Layer<T>>,
}

/// Activations of one forward pass. `activations[0]` is the input and
/// `activations[k + 1]` the output of layer `k`.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub mode: Mode,
    pub activations: Vec<Tensor<T>>,
    bn: Vec<Option<BatchNormCache<T>>>,
    dropout: Vec<Option<DropoutMask<T>>>,
    ends_in_softmax: bool,
}

impl<T: Real> Trace<T> {
    /// Final network output (class probabilities for a softmax plan).
    pub fn output(&self) -> &Tensor<T> {
        self.activations.last().expect("non-empty trace")
    }

    /// Pre-softmax scores; the output itself when there is no softmax.
    pub fn logits(&self) -> &Tensor<T> {
        if self.ends_in_softmax {
            &self.activations[self.activations.len() - 2]
        } else {
            self.output()
        }
    }
}

/// Parameter gradients of one layer, in parameter order.
#[derive(Debug, Clone)]
pub struct Backward<T> {
    /// `param_grads[k]` holds the gradients of layer `k`'s tensors.
    pub param_grads: Vec<Vec<Tensor<T>>>,
    /// `activation_grads[k]` is the gradient with respect to
    /// `activations[k]`, filled from the starting layer downwards.
    pub activation_grads: Vec<Option<Tensor<T>>>,
}

fn mix_seed(seed: u64, layer: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (layer as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<T: Real> Network<T> {
    /// Allocates parameters: He-uniform weights, zero biases, identity
    /// batch norm.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        let shapes = config.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = config.input_shape.to_vec();
        let mut layers = Vec::with_capacity(config.layers.len());
        for (spec, shape) in config.layers.iter().zip(&shapes) {
            let layer = match *spec {
                LayerSpec::Conv2d {
                    filters,
                    kernel_size,
                    stride,
                } => {
                    let c = prev[prev.len() - 1];
                    let fan_in = kernel_size * kernel_size * c;
                    Layer::Conv2d(Conv2d {
                        kernel: he_uniform(
                            &mut rng,
                            vec![kernel_size, kernel_size, c, filters],
                            fan_in,
                        ),
                        bias: Tensor::zeros(vec![filters]),
                        stride,
                    })
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(prev[prev.len() - 1])),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { units } => Layer::Dense(Dense {
                    weights: he_uniform(&mut rng, vec![prev[0], units], prev[0]),
                    bias: Tensor::zeros(vec![units]),
                }),
                LayerSpec::Dropout { rate } => Layer::Dropout(rate),
                LayerSpec::Softmax => Layer::Softmax,
            };
            layers.push(layer);
            prev = shape.clone();
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Learnable scalars (weights, biases, batch-norm scale and shift).
    pub fn learnable_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Batch-norm running means and variances.
    pub fn running_stat_count(&self) -> usize {
        self.running_stats().iter().map(|t| t.len()).sum()
    }

    /// Total parameters as reported for the model, running stats included.
    pub fn parameter_count(&self) -> usize {
        self.learnable_count() + self.running_stat_count()
    }

    /// Learnable tensors in plan order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv2d(c) => out.extend([&c.kernel, &c.bias]),
                Layer::BatchNorm(b) => out.extend([&b.gamma, &b.beta]),
                Layer::Dense(d) => out.extend([&d.weights, &d.bias]),
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv2d(c) => out.extend([&mut c.kernel, &mut c.bias]),
                Layer::BatchNorm(b) => out.extend([&mut b.gamma, &mut b.beta]),
                Layer::Dense(d) => out.extend([&mut d.weights, &mut d.bias]),
                _ => {}
            }
        }
        out
    }

    pub fn running_stats(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::BatchNorm(b) => Some([&b.running_mean, &b.running_var]),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn running_stats_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .filter_map(|l| match l {
                Layer::BatchNorm(b) => Some([&mut b.running_mean, &mut b.running_var]),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// Convolution blocks with the layer holding their activated output.
    pub fn conv_blocks(&self) -> Vec<ConvBlock> {
        let shapes = self.config.shapes().expect("validated at build");
        let mut blocks = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if let Layer::Conv2d(c) = l {
                let mut act = i;
                for (j, next) in self.layers.iter().enumerate().skip(i + 1) {
                    match next {
                        Layer::BatchNorm(_) | Layer::Relu => act = j,
                        _ => break,
                    }
                }
                let s = &shapes[act];
                blocks.push(ConvBlock {
                    index: blocks.len(),
                    activation_layer: act,
                    channels: c.filters(),
                    height: s[0],
                    width: s[1],
                });
            }
        }
        blocks
    }

    /// Converts the network to another float precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                    kernel: c.kernel.cast(),
                    bias: c.bias.cast(),
                    stride: c.stride,
                }),
                Layer::BatchNorm(b) => Layer::BatchNorm(BatchNorm {
                    gamma: b.gamma.cast(),
                    beta: b.beta.cast(),
                    running_mean: b.running_mean.cast(),
                    running_var: b.running_var.cast(),
                }),
                Layer::Relu => Layer::Relu,
                Layer::Flatten => Layer::Flatten,
                Layer::Dense(d) => Layer::Dense(Dense {
                    weights: d.weights.cast(),
                    bias: d.bias.cast(),
                }),
                Layer::Dropout(r) => Layer::Dropout(*r),
                Layer::Softmax => Layer::Softmax,
            })
            .collect();
        Network {
            config: self.config.clone(),
            layers,
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let (_, h, w, c) = input.dims4()?;
        if [h, w, c] != self.config.input_shape {
            return Err(Error::Shape(format!(
                "network expects {:?} inputs, got {:?}",
                self.config.input_shape,
                [h, w, c]
            )));
        }
        Ok(())
    }

    /// Runs layers `0..end` and keeps every activation.
    pub fn forward_until(&self, input: &Tensor<T>, mode: Mode, end: usize) -> Result<Trace<T>> {
        self.check_input(input)?;
        let end = end.min(self.layers.len());
        let mut trace = Trace {
            mode,
            activations: vec![input.clone()],
            bn: Vec::with_capacity(end),
            dropout: Vec::with_capacity(end),
            ends_in_softmax: end == self.layers.len()
                && matches!(self.layers.last(), Some(Layer::Softmax)),
        };
        for (i, layer) in self.layers[..end].iter().enumerate() {
            let x = trace.activations.last().expect("input present");
            let mut bn_cache = None;
            let mut mask = None;
            let y = match (layer, mode) {
                (Layer::Conv2d(c), _) => c.forward(x)?,
                (Layer::BatchNorm(b), Mode::Train { .. }) => {
                    let (y, cache) = b.forward_train(x)?;
                    bn_cache = Some(cache);
                    y
                }
                (Layer::BatchNorm(b), Mode::Infer) => b.forward_infer(x)?,
                (Layer::Relu, _) => relu_forward(x),
                (Layer::Flatten, _) => {
                    let n = x.shape()[0];
                    let d = x.len() / n;
                    x.clone().reshape(vec![n, d])?
                }
                (Layer::Dense(d), _) => d.forward(x)?,
                (Layer::Dropout(rate), Mode::Train { seed }) => {
                    let (y, m) = dropout_forward(x, *rate, Some(mix_seed(seed, i)))?;
                    mask = m;
                    y
                }
                (Layer::Dropout(_), Mode::Infer) => x.clone(),
                (Layer::Softmax, _) => softmax(x),
            };
            trace.bn.push(bn_cache);
            trace.dropout.push(mask);
            trace.activations.push(y);
        }
        Ok(trace)
    }

    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<Trace<T>> {
        self.forward_until(input, mode, self.layers.len())
    }

    /// Class probabilities of a batch in inference mode, without keeping
    /// intermediate activations.
    pub fn infer(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check_input(input)?;
        let mut x = input.clone();
        let mut logits = None;
        for layer in &self.layers {
            x = match layer {
                Layer::Conv2d(c) => c.forward(&x)?,
                Layer::BatchNorm(b) => b.forward_infer(&x)?,
                Layer::Relu => relu_forward(&x),
                Layer::Flatten => {
                    let n = x.shape()[0];
                    let d = x.len() / n;
                    x.reshape(vec![n, d])?
                }
                Layer::Dense(d) => d.forward(&x)?,
                Layer::Dropout(_) => x,
                Layer::Softmax => {
                    let p = softmax(&x);
                    logits = Some(x);
                    p
                }
            };
        }
        let logits = logits.unwrap_or_else(|| x.clone());
        Ok((logits, x))
    }

    /// Folds batch statistics of a train-mode trace into the running stats.
    pub fn update_running_stats(&mut self, trace: &Trace<T>) {
        for (layer, cache) in self.layers.iter_mut().zip(&trace.bn) {
            if let (Layer::BatchNorm(b), Some(c)) = (layer, cache) {
                b.update_running(c);
            }
        }
    }

    /// Back-propagates `upstream`, the gradient with respect to
    /// `trace.activations[from]`, down to the network input. Starting at
    /// the logits (the softmax input) is the usual choice.
    pub fn backward_from(&self, trace: &Trace<T>, from: usize, upstream: Tensor<T>) -> Result<Backward<T>> {
        let n_layers = trace.activations.len() - 1;
        if from > n_layers {
            return Err(Error::InvalidArgument(format!(
                "cannot start backward at activation {from} of {n_layers}"
            )));
        }
        if upstream.shape() != trace.activations[from].shape() {
            return Err(Error::Shape(format!(
                "upstream {:?} vs activation {:?}",
                upstream.shape(),
                trace.activations[from].shape()
            )));
        }
        let mut param_grads: Vec<Vec<Tensor<T>>> = vec![Vec::new(); self.layers.len()];
        let mut activation_grads: Vec<Option<Tensor<T>>> = vec![None; n_layers + 1];
        let mut g = upstream;
        for k in (0..from).rev() {
            let x = &trace.activations[k];
            let gin = match &self.layers[k] {
                Layer::Conv2d(c) => {
                    let grads = crate::tensor::conv2d_backward(&g, Some(x), &c.kernel, c.stride)?;
                    param_grads[k] = vec![grads.kernel, grads.bias];
                    grads.input
                }
                Layer::BatchNorm(b) => {
                    let (dx, dgamma, dbeta) = match trace.mode {
                        Mode::Train { .. } => {
                            let cache = trace.bn[k].as_ref().ok_or(Error::MissingCache(k))?;
                            b.backward_train(&g, cache)?
                        }
                        Mode::Infer => b.backward_infer(&g, x)?,
                    };
                    let c = dgamma.len();
                    param_grads[k] = vec![Tensor::new(vec![c], dgamma)?, Tensor::new(vec![c], dbeta)?];
                    dx
                }
                Layer::Relu => relu_backward(&g, x)?,
                Layer::Flatten => g.clone().reshape(x.shape().to_vec())?,
                Layer::Dense(d) => {
                    let grads = dense_backward(&g, x, &d.weights)?;
                    param_grads[k] = vec![grads.weights, grads.bias];
                    grads.input
                }
                Layer::Dropout(_) => dropout_backward(&g, trace.dropout[k].as_ref()),
                Layer::Softmax => {
                    return Err(Error::InvalidArgument(
                        "backward through softmax is fused with the loss; start at the logits".into(),
                    ))
                }
            };
            activation_grads[k + 1] = Some(std::mem::replace(&mut g, gin));
        }
        activation_grads[0] = Some(g);
        Ok(Backward {
            param_grads,
            activation_grads,
        })
    }

    /// Index of the activation that holds the logits.
    pub fn logits_index(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Softmax) => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    /// Stores parameter gradients into the tensors' gradient slots.
    pub fn attach_grads(&mut self, grads: &Backward<T>) -> Result<()> {
        let flat: Vec<&Tensor<T>> = grads.param_grads.iter().flatten().collect();
        let mut params = self.params_mut();
        if flat.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} gradient tensors for {} parameters",
                flat.len(),
                params.len()
            )));
        }
        for (p, g) in params.iter_mut().zip(flat) {
            p.set_grad(g.data().to_vec())?;
        }
        Ok(())
    }
}

fn he_uniform<T: Real>(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-limit..limit))).collect();
    Tensor::new(shape, data).expect("shape product")
}
