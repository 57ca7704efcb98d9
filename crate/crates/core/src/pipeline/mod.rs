//! Fine-tuning and inference orchestration.
//!
//! A [`MakeupRemover`] pairs a frozen base predictor, used for the
//! deterministic inversion, with the predictor being tuned, which drives the
//! short differentiable sampling pass. Training and inference share
//! [`MakeupRemover::sample_traced`], so there is a single sampling code path.

mod batch;
mod finetune;
mod remover;

pub use batch::{batch_clean, BatchOutcome};
pub use finetune::{
    dataset_fingerprint, finetune, DatasetFingerprint, EpochRecord, FinetuneConfig, FinetuneOutcome, RunManifest,
    ENCODER_RESOLUTION_NOTE, FINETUNE_WORKFLOW,
};
pub use remover::{remove_makeup, MakeupRemover, SamplingSettings, REMOVER_KIND};
