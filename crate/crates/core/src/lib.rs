//! Evaluation toolkit for probabilistic fixation-density models.
//!
//! Densities are stored as natural-log probabilities over a pixel grid.
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common instantiations.

pub mod baselines;
pub mod blur;
pub mod calibration;
pub mod dataset;
pub mod ensemble;
mod error;
pub mod fixations;
pub mod grid;
pub mod io;
pub mod logspace;
pub mod metrics;
pub mod readout;
pub mod sampling;
mod scalar;

pub use error::{Error, Result};
pub use fixations::{Fixation, FixationSet};
pub use grid::{DensityGrid, SaliencyMap};
pub use scalar::{sigmoid, softplus, softplus_inv, Scalar};

pub type Density = grid::DensityGrid<f64>;
pub type Density32 = grid::DensityGrid<f32>;
pub type Saliency = grid::SaliencyMap<f64>;
pub type Saliency32 = grid::SaliencyMap<f32>;
pub type Features = readout::FeatureVolume<f64>;
pub type Features32 = readout::FeatureVolume<f32>;
pub type Readout = readout::ReadoutModel<f64>;
pub type Readout32 = readout::ReadoutModel<f32>;
pub type Dataset = dataset::Dataset<f64>;
pub type Dataset32 = dataset::Dataset<f32>;
