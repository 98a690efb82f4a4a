use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One entry of a network's layer plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel_size: usize,
        stride: usize,
    },
    BatchNorm,
    Relu,
    Flatten,
    Dense {
        units: usize,
    },
    Dropout {
        rate: f64,
    },
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    BatchNorm,
    Relu,
    Flatten,
    Dense,
    Dropout,
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv2d { .. } => LayerKind::Conv2d,
            LayerSpec::BatchNorm => LayerKind::BatchNorm,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::Flatten => LayerKind::Flatten,
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Dropout { .. } => LayerKind::Dropout,
            LayerSpec::Softmax => LayerKind::Softmax,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv2d {
                filters,
                kernel_size,
                stride,
            } if filters == 0 || kernel_size == 0 || stride == 0 => Err(Error::InvalidArgument(
                format!("conv2d needs positive filters/kernel/stride, got {filters}/{kernel_size}/{stride}"),
            )),
            LayerSpec::Dense { units: 0 } => {
                Err(Error::InvalidArgument("dense layer with zero units".into()))
            }
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => Err(
                Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")),
            ),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense => "dense",
            LayerKind::Dropout => "dropout",
            LayerKind::Softmax => "softmax",
        };
        f.write_str(s)
    }
}
