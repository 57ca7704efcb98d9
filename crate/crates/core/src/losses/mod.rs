//! Terms of the fine-tuning objective and their gradients with respect to
//! the generated image `I_g`.
//!
//! Every `*_with_grad` function returns `dL/dI_g` in `I_g`'s own layout and
//! value range. Image encoders see unit-range pixels; the conversion happens
//! inside the encoder so callers may pass either range.

mod objective;
mod terms;

pub use objective::{AgeLossVariant, LossBreakdown, LossComponents, LossWeights, Objective, ObjectiveValue, PromptPair};
pub use terms::{
    age_prompt, clip_age_loss, clip_age_loss_from_embeddings, clip_age_loss_with_grad, clip_directional_loss,
    clip_directional_loss_with_grad, directional_loss, identity_loss, identity_loss_from_embeddings,
    identity_loss_with_grad, perceptual_loss, perceptual_loss_with_grad, pixel_l1_loss, pixel_l1_loss_with_grad,
    ssrnet_age_loss, ssrnet_age_loss_images, ssrnet_age_loss_with_grad, total_loss, FEATURE_EPS,
};
