use serde::{Deserialize, Serialize};

use super::terms::{
    clip_age_loss, clip_age_loss_with_grad, clip_directional_loss, clip_directional_loss_with_grad, identity_loss,
    identity_loss_with_grad, perceptual_loss, perceptual_loss_with_grad, pixel_l1_loss, pixel_l1_loss_with_grad,
    ssrnet_age_loss_with_grad, total_loss,
};
use crate::age::smoothed_l1;
use crate::encoders::Backends;
use crate::error::{Error, Result};
use crate::image::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_clip: f64,
    pub lambda_id: f64,
    pub lambda_lpips: f64,
    pub lambda_l1: f64,
    pub lambda_age: f64,
    /// Weight of the distance to the clean original inside the identity term.
    pub lambda_1_id: f64,
    /// Weight of the distance to the made-up input inside the identity term.
    pub lambda_2_id: f64,
}

impl LossWeights {
    pub fn ssrnet() -> Self {
        Self {
            lambda_clip: 5.0,
            lambda_id: 1.0,
            lambda_lpips: 5.0,
            lambda_l1: 2.0,
            lambda_age: 0.5,
            lambda_1_id: 0.75,
            lambda_2_id: 0.25,
        }
    }

    pub fn clip_age() -> Self {
        Self {
            lambda_age: 5.0,
            ..Self::ssrnet()
        }
    }

    pub fn for_variant(variant: AgeLossVariant) -> Self {
        match variant {
            AgeLossVariant::Ssrnet => Self::ssrnet(),
            AgeLossVariant::Clip => Self::clip_age(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_clip,
            self.lambda_id,
            self.lambda_lpips,
            self.lambda_l1,
            self.lambda_age,
            self.lambda_1_id,
            self.lambda_2_id,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::ssrnet()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeLossVariant {
    /// Smoothed L1 against a differentiable age regressor.
    #[default]
    Ssrnet,
    /// Cosine distance to the embedding of an age prompt.
    Clip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptPair {
    pub source_text: String,
    pub target_text: String,
}

impl PromptPair {
    pub fn new(source_text: impl Into<String>, target_text: impl Into<String>) -> Result<Self> {
        let p = Self {
            source_text: source_text.into(),
            target_text: target_text.into(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_text.trim().is_empty() || self.target_text.trim().is_empty() {
            return Err(Error::Config("prompts must be non-empty".into()));
        }
        Ok(())
    }
}

impl Default for PromptPair {
    fn default() -> Self {
        Self {
            source_text: "face with makeup".into(),
            target_text: "face without makeup".into(),
        }
    }
}

/// Unweighted components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub clip: f64,
    pub id: f64,
    pub lpips: f64,
    pub l1: f64,
    pub age: f64,
}

/// Unweighted components plus their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub clip: f64,
    pub id: f64,
    pub lpips: f64,
    pub l1: f64,
    pub age: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Field-wise mean; `None` for an empty slice.
    pub fn mean(items: &[LossBreakdown]) -> Option<LossBreakdown> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let mut m = LossBreakdown::default();
        for b in items {
            m.clip += b.clip / n;
            m.id += b.id / n;
            m.lpips += b.lpips / n;
            m.l1 += b.l1 / n;
            m.age += b.age / n;
            m.total += b.total / n;
        }
        Some(m)
    }
}

/// The assembled fine-tuning objective for one pair.
#[derive(Debug, Clone)]
pub struct Objective {
    pub backends: Backends,
    pub prompts: PromptPair,
    pub weights: LossWeights,
    pub variant: AgeLossVariant,
    /// Fixed smoothed-L1 transition point of the regressor age term.
    pub age_beta: f64,
}

#[derive(Debug, Clone)]
pub struct ObjectiveValue {
    pub breakdown: LossBreakdown,
    /// `dL_total/dI_g` when requested.
    pub grad: Option<Vec<f64>>,
    /// The directional term was undefined (generated and input embed
    /// identically) and contributed zero.
    pub clip_skipped: bool,
}

impl Objective {
    pub fn new(backends: Backends, variant: AgeLossVariant) -> Self {
        Self {
            backends,
            prompts: PromptPair::default(),
            weights: LossWeights::for_variant(variant),
            variant,
            age_beta: 1.0,
        }
    }

    pub fn evaluate(
        &self,
        original: &ImageTensor,
        made_up: &ImageTensor,
        generated: &ImageTensor,
        age_years: f64,
        with_grad: bool,
    ) -> Result<ObjectiveValue> {
        let b = &self.backends;
        let w = &self.weights;
        let mut grad = with_grad.then(|| vec![0.0; generated.len()]);
        let mut add = |scale: f64, g: Vec<f64>| {
            if let Some(acc) = grad.as_mut() {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += scale * v;
                }
            }
        };

        let mut clip_skipped = false;
        let clip = if with_grad {
            clip_directional_loss_with_grad(generated, made_up, &self.prompts, b.image_text.as_ref())
                .map(|(v, g)| {
                    add(w.lambda_clip, g);
                    v
                })
        } else {
            clip_directional_loss(generated, made_up, &self.prompts, b.image_text.as_ref())
        };
        let clip = match clip {
            Ok(v) => v,
            Err(Error::DegenerateDirection(_)) => {
                clip_skipped = true;
                0.0
            }
            Err(e) => return Err(e),
        };

        let id = if with_grad {
            let (v, g) = identity_loss_with_grad(original, made_up, generated, b.face.as_ref(), w)?;
            add(w.lambda_id, g);
            v
        } else {
            identity_loss(original, made_up, generated, b.face.as_ref(), w)?
        };

        let lpips = if with_grad {
            let (v, g) = perceptual_loss_with_grad(generated, made_up, b.perceptual.as_ref())?;
            add(w.lambda_lpips, g);
            v
        } else {
            perceptual_loss(generated, made_up, b.perceptual.as_ref())?
        };

        let l1 = if with_grad {
            let (v, g) = pixel_l1_loss_with_grad(generated, made_up)?;
            add(w.lambda_l1, g);
            v
        } else {
            pixel_l1_loss(generated, made_up)?
        };

        let age = match (self.variant, with_grad) {
            (AgeLossVariant::Ssrnet, true) => {
                let (v, g) = ssrnet_age_loss_with_grad(age_years, generated, b.age.as_ref(), self.age_beta)?;
                add(w.lambda_age, g);
                v
            }
            (AgeLossVariant::Ssrnet, false) => {
                smoothed_l1(age_years, b.age.predict_age(generated)?, self.age_beta)?
            }
            (AgeLossVariant::Clip, true) => {
                let (v, g) = clip_age_loss_with_grad(generated, age_years, b.image_text.as_ref())?;
                add(w.lambda_age, g);
                v
            }
            (AgeLossVariant::Clip, false) => clip_age_loss(generated, age_years, b.image_text.as_ref())?,
        };

        let breakdown = total_loss(
            &LossComponents {
                clip,
                id,
                lpips,
                l1,
                age,
            },
            w,
        )?;
        Ok(ObjectiveValue {
            breakdown,
            grad,
            clip_skipped,
        })
    }
}
