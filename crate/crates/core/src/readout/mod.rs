//! Trainable readout head over precomputed feature volumes.

mod checkpoint;
mod features;
mod folds;
mod model;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use features::{synth_features, FeatureVolume, SynthSample, SynthSpec};
pub use folds::{make_folds, Folds, Role, DEFAULT_FOLDS};
pub use model::{image_samples, ImageSample, Layer, ReadoutModel, DEFAULT_HIDDEN, INITIAL_BLUR_SIGMA, NORM_EPS};
pub use train::{train, EpochRecord, TrainConfig};
