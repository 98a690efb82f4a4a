//! The compact gait CNN: construction, training, evaluation protocols and
//! model files.

mod eval;
mod file;
mod model;
mod train;

pub use eval::{
    cross_dataset_eval, cross_validate, evaluate, make_folds, predict, predict_batch,
    split_by_subject, CrossDatasetReport, CrossValReport, Evaluation, FoldPlan, FoldResult,
    Metrics, Prediction, PROTOCOL_SUBJECTS,
};
pub use file::{file_size, from_bytes, header_len, load_model, save_model, to_bytes, MAGIC, TRAILER_LEN, VERSION};
pub use model::{
    Backward, ConvBlock, Layer, LayerParams, ModelConfig, Network, Trace, FILTER_PLAN, INPUT_SIZE,
};
pub use train::{
    argmax, batch_tensor, recalibrate_batchnorm, train, train_with, EpochStats, Sample,
    TrainConfig, TrainReport,
};

use crate::labels::Representation;

/// A trained network together with the representation it consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitModel {
    pub representation: Representation,
    pub network: Network<f32>,
}

impl GaitModel {
    pub fn new(representation: Representation, network: Network<f32>) -> Self {
        Self {
            representation,
            network,
        }
    }
}
