//! Cosine noise schedule, timestep grids, and deterministic (eta = 0) DDIM
//! inversion and sampling around a pluggable noise predictor.

pub mod ddim;
pub mod grid;
pub mod predictor;
pub mod schedule;

pub use ddim::{ddim_invert, ddim_sample, ddim_sample_backward, ddim_sample_traced, ddim_step, SampleTrace};
pub use grid::{make_step_grid, StepGrid};
pub use predictor::{NoisePredictor, ToyPredictor, ToyPredictorConfig, TrainablePredictor};
pub use schedule::{make_cosine_schedule, DiffusionSchedule};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, ValueRange};

/// An unbounded H×W×3 diffusion state (planar layout, like [`ImageTensor`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Latent {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != ImageTensor::CHANNELS * height * width || height == 0 || width == 0 {
            return Err(Error::dims(
                format!("{}x{height}x{width}", ImageTensor::CHANNELS),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { height, width, data })
    }

    /// Takes a signed-range image as the clean diffusion state.
    pub fn from_image(img: &ImageTensor) -> Result<Self> {
        if img.range() != ValueRange::Signed {
            return Err(Error::InvalidArgument(
                "diffusion operates on signed-range images".into(),
            ));
        }
        Self::new(img.height(), img.width(), img.data().to_vec())
    }

    /// Clamps into the signed range.
    pub fn to_image(&self) -> Result<ImageTensor> {
        ImageTensor::clamped(self.height, self.width, ValueRange::Signed, self.data.clone())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn max_abs_diff(&self, other: &Latent) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
