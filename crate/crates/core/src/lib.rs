//! Physics-structured underwater image formation.
//!
//! The forward model turns an in-air RGB-D pair into a synthetic underwater
//! image through range attenuation, additive backscatter, radial vignetting
//! and a linear sensor. Its ten parameters can be fitted adversarially from
//! unlabeled underwater images ([`gan`]) or by least squares on paired data
//! ([`fit`]). The fitted model is then inverted to restore color and recover
//! relative depth from a single image ([`restoration`]). [`evaluation`]
//! holds the color accuracy, color consistency and RMSE metrics together
//! with the histogram-equalization and gray-world baselines.

pub mod checkpoint;
pub mod discriminator;
pub mod error;
pub mod evaluation;
pub mod fit;
pub mod gan;
pub mod image;
pub mod optim;
pub mod params;
pub mod physics;
pub mod reparam;
pub mod resample;
pub mod restoration;
pub mod synth;

pub use error::{Error, Result};
pub use image::{DepthMap, Dims, LinearImage, PixelMask, Plane, ZeroDepth};
pub use params::{CameraParams, RenderModel, WaterParams, NUM_PARAMS, PARAM_NAMES};
