//! Pluggable embedding backends.
//!
//! Every image-side trait carries a vector-Jacobian product so the
//! fine-tuning losses can be differentiated with respect to the generated
//! image. Text encoders are treated as frozen constants.

pub mod doubles;
pub mod registry;

pub use doubles::{
    AnchoredImageText, TestDoubleAgePredictor, TestDoubleFeatureExtractor, TestDoubleImageEncoder, TestDoubleImageText,
    TestDoubleSpec,
};
pub use registry::{BackendOptions, BackendRegistry, Backends, Registries};

use crate::embedding::EmbeddingVector;
use crate::error::Result;
use crate::image::ImageTensor;

pub trait ImageEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode_image(&self, img: &ImageTensor) -> Result<EmbeddingVector>;

    /// Given `dL/de` for the unit-norm embedding `e`, returns `dL/dpixels`
    /// in `img`'s own layout and value range.
    fn encode_image_vjp(&self, img: &ImageTensor, grad: &[f64]) -> Result<Vec<f64>>;
}

pub trait TextEncoder: Send + Sync {
    fn encode_text(&self, text: &str) -> Result<EmbeddingVector>;
}

/// Joint image-text encoder whose two branches share an embedding space.
pub trait ImageTextEncoder: ImageEncoder + TextEncoder {}

impl<T: ImageEncoder + TextEncoder> ImageTextEncoder for T {}

/// Identity-feature encoder. Any [`ImageEncoder`] can play this role.
pub trait FaceEncoder: ImageEncoder {}

impl<T: ImageEncoder> FaceEncoder for T {}

/// One layer of perceptual features, planar `(channels, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

pub trait FeatureExtractor: Send + Sync {
    fn features(&self, img: &ImageTensor) -> Result<Vec<FeatureMap>>;

    /// Given per-layer `dL/dfeatures` (same layout as [`Self::features`]),
    /// returns `dL/dpixels`.
    fn features_vjp(&self, img: &ImageTensor, grads: &[Vec<f64>]) -> Result<Vec<f64>>;
}

/// Maps a face image to an age in years. Evaluation-side predictors only need this.
pub trait AgePredictor: Send + Sync {
    fn predict_age(&self, img: &ImageTensor) -> Result<f64>;
}

/// An age predictor that can also supply `d age / d pixels`.
pub trait DifferentiableAgePredictor: AgePredictor {
    fn predict_age_with_grad(&self, img: &ImageTensor) -> Result<(f64, Vec<f64>)>;
}
