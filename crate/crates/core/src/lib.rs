//! Vision-based gait-pathology classification: silhouettes and skeletons to
//! gait energy images, a compact five-class CNN over them, and saliency /
//! grad-CAM explanations of its decisions.

pub mod classifier;
pub mod error;
pub mod explain;
pub mod gait_repr;
pub mod labels;
pub mod par;
pub mod silhouette;
pub mod synthkit;
pub mod tensor;

pub use error::{Error, Result};
pub use labels::{GaitClass, Representation, Severity, NUM_CLASSES};
