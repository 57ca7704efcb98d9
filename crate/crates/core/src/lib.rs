//! Makeup removal with a text-guided, fine-tuned diffusion model.
//!
//! The crate covers the whole workflow at desk scale: a cosine-scheduled DDIM
//! engine with inversion and a differentiable sampling pass, the composite
//! fine-tuning objective (directional embedding, dual identity, perceptual,
//! pixel L1 and age terms), a soft stage-wise age regressor trained with a
//! band-weighted, self-adjusting smoothed L1 loss, and the age / identity
//! evaluation harness. Encoders are pluggable; deterministic smooth test
//! doubles ship with the crate so that every loss and metric can be checked
//! without pretrained weights.

pub mod age;
pub mod bins;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod diffusion;
pub mod embedding;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod image;
pub mod losses;
pub mod nn;
pub mod pair;
pub mod pipeline;
pub mod synthetic;
pub mod workflow;

pub use bins::{default_age_bins, AgeGroupBins};
pub use embedding::EmbeddingVector;
pub use error::{Error, Result};
pub use image::{convert_range, validate_image, ImageTensor, ValueRange};
pub use pair::MakeupPair;
