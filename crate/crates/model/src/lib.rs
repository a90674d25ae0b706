//! Neural side of the predictor: feature preparation, the three encoder
//! streams, the low-rank interaction attention block, the multimodal
//! Gaussian-mixture decoder, and the training / evaluation harness.

pub mod config;
pub mod decoder;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod features;
pub mod gradsuite;
pub mod grid;
pub mod leanformer;
pub mod loss;
pub mod model;
pub mod train;

pub use config::{Ablation, FeatureConfig, ModelConfig, TrainConfig};
pub use error::{ModelError, Result};
pub use model::{Model, ModelOutput};
