use std::path::PathBuf;

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::remover::{MakeupRemover, SamplingSettings};
use crate::diffusion::{ddim_sample_backward, Latent, TrainablePredictor};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, ValueRange};
use crate::losses::{AgeLossVariant, LossBreakdown, LossWeights, Objective, PromptPair};
use crate::nn::{seeded_rng, Adam};
use crate::pair::MakeupPair;

pub const FINETUNE_WORKFLOW: &str = "finetune";

/// Where the fine-tuning losses see the generated image.
pub const ENCODER_RESOLUTION_NOTE: &str = "losses receive the full-resolution image; embedding doubles area-pool to \
     at most 8x8, the perceptual double runs at full resolution, the age regressor area-resizes to 64x64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub total_steps: usize,
    pub invert_steps: usize,
    pub sample_steps: usize,
    /// Side of the square images the diffusion path accepts.
    pub image_side: usize,
    pub age_loss_variant: AgeLossVariant,
    /// Defaults to the weights of the chosen age variant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<LossWeights>,
    pub prompts: PromptPair,
    /// Fixed smoothed-L1 transition point of the regressor age term.
    pub age_beta: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        let d = SamplingSettings::default();
        Self {
            epochs: 5,
            lr: 4e-3,
            weight_decay: 0.0,
            total_steps: d.total_steps,
            invert_steps: d.invert_steps,
            sample_steps: d.sample_steps,
            image_side: d.image_side,
            age_loss_variant: AgeLossVariant::Ssrnet,
            weights: None,
            prompts: PromptPair::default(),
            age_beta: 1.0,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.lr > 0.0) || self.weight_decay < 0.0 || !(self.age_beta > 0.0) {
            return Err(Error::Config(format!(
                "need epochs >= 1, lr > 0, weight_decay >= 0, age_beta > 0 (got {}, {}, {}, {})",
                self.epochs, self.lr, self.weight_decay, self.age_beta
            )));
        }
        self.sampling().validate()?;
        self.prompts.validate()?;
        self.resolved_weights().validate()
    }

    pub fn sampling(&self) -> SamplingSettings {
        SamplingSettings {
            total_steps: self.total_steps,
            invert_steps: self.invert_steps,
            sample_steps: self.sample_steps,
            image_side: self.image_side,
        }
    }

    pub fn resolved_weights(&self) -> LossWeights {
        self.weights.unwrap_or_else(|| LossWeights::for_variant(self.age_loss_variant))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub name: String,
    pub pairs: usize,
    pub sha256: String,
}

/// Hash over ids, ages and pixel values of a pair list.
pub fn dataset_fingerprint(name: &str, pairs: &[MakeupPair]) -> DatasetFingerprint {
    let mut h = Sha256::new();
    for p in pairs {
        h.update(p.source_id().as_bytes());
        h.update([0u8]);
        h.update(p.age_years().to_le_bytes());
        for img in [p.clean(), p.made_up()] {
            h.update((img.height() as u64).to_le_bytes());
            h.update((img.width() as u64).to_le_bytes());
            for v in img.data() {
                h.update(v.to_le_bytes());
            }
        }
    }
    let digest = h.finalize();
    DatasetFingerprint {
        name: name.to_string(),
        pairs: pairs.len(),
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's steps, measured before each update.
    pub train: LossBreakdown,
    /// Mean over the validation pairs after the epoch.
    pub val: Option<LossBreakdown>,
    pub clip_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub workflow: String,
    pub tool_version: String,
    /// Snapshot of the configuration that produced the run.
    pub config: serde_json::Value,
    pub seed: u64,
    pub datasets: Vec<DatasetFingerprint>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub checkpoint: Option<PathBuf>,
    pub encoder_resolution: String,
}

impl RunManifest {
    pub fn epoch_totals(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train.total).collect()
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::data(path.as_ref(), e.to_string()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// Parameters from the epoch with the lowest validation total (training
    /// mean when there is no validation split).
    pub remover: MakeupRemover,
    pub manifest: RunManifest,
}

struct Prepared<'a> {
    pair: &'a MakeupPair,
    original: ImageTensor,
    made_up: ImageTensor,
    latent: Latent,
}

fn prepare<'a>(remover: &MakeupRemover, pairs: &'a [MakeupPair]) -> Result<Vec<Prepared<'a>>> {
    pairs
        .iter()
        .map(|p| {
            Ok(Prepared {
                pair: p,
                original: p.clean().to_range(ValueRange::Signed),
                made_up: p.made_up().to_range(ValueRange::Signed),
                latent: remover.invert(p.made_up())?,
            })
        })
        .collect()
}

fn evaluate(remover: &MakeupRemover, objective: &Objective, items: &[Prepared]) -> Result<Option<LossBreakdown>> {
    let mut all = Vec::with_capacity(items.len());
    for it in items {
        let generated = remover.sample_traced(&it.latent)?.output.to_image()?;
        let v = objective.evaluate(&it.original, &it.made_up, &generated, it.pair.age_years(), false)?;
        all.push(v.breakdown);
    }
    Ok(LossBreakdown::mean(&all))
}

/// Fine-tunes `remover.tuned` on `train`, one pair per optimizer step.
///
/// Latents of the made-up images come from the frozen base predictor and are
/// computed once. Each step samples with the tuned predictor, evaluates the
/// composite objective on the clamped output and backpropagates through every
/// sampling step. `config_snapshot` is stored verbatim in the manifest.
pub fn finetune(
    train: &[MakeupPair],
    val: &[MakeupPair],
    remover: MakeupRemover,
    objective: &Objective,
    cfg: &FinetuneConfig,
    config_snapshot: serde_json::Value,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    let mut remover = remover.with_settings(cfg.sampling())?;
    let train_items = prepare(&remover, train)?;
    let val_items = prepare(&remover, val)?;
    let datasets = vec![dataset_fingerprint("train", train), dataset_fingerprint("val", val)];

    let mut rng = seeded_rng(cfg.seed);
    let mut adam = Adam::new(remover.tuned.params().len(), cfg.weight_decay);
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut seen = Vec::with_capacity(order.len());
        let mut skipped = 0;
        for &i in &order {
            let it = &train_items[i];
            let trace = remover.sample_traced(&it.latent)?;
            let generated = trace.output.to_image()?;
            let value = objective
                .evaluate(&it.original, &it.made_up, &generated, it.pair.age_years(), true)
                .map_err(|e| match e {
                    Error::NonFiniteLoss(m) => {
                        Error::NonFiniteLoss(format!("pair {} at epoch {epoch}: {m}", it.pair.source_id()))
                    }
                    other => other,
                })?;
            if !value.breakdown.total.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "pair {} at epoch {epoch}: {:?}",
                    it.pair.source_id(),
                    value.breakdown
                )));
            }
            if value.clip_skipped {
                skipped += 1;
                warn!("pair {}: degenerate image direction, directional term skipped", it.pair.source_id());
            }
            let mut grad = value.grad.expect("gradient requested");
            // the clamp to the signed range passes gradient only inside it
            for (g, x) in grad.iter_mut().zip(trace.output.data()) {
                if !(-1.0..=1.0).contains(x) {
                    *g = 0.0;
                }
            }
            let mut grad_params = vec![0.0; remover.tuned.params().len()];
            ddim_sample_backward(
                &trace,
                &remover.tuned,
                remover.schedule(),
                remover.sample_grid(),
                &grad,
                &mut grad_params,
            )?;
            adam.step(remover.tuned.params_mut(), &grad_params, cfg.lr);
            seen.push(value.breakdown);
        }
        let train_mean = LossBreakdown::mean(&seen).expect("non-empty epoch");
        let val_mean = evaluate(&remover, objective, &val_items)?;
        info!(
            "finetune epoch {epoch}: train total {:.5} val total {}",
            train_mean.total,
            val_mean.map_or("-".to_string(), |v| format!("{:.5}", v.total))
        );
        let score = val_mean.map_or(train_mean.total, |v| v.total);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, epoch, remover.tuned.params().to_vec()));
        }
        epochs.push(EpochRecord {
            epoch,
            train: train_mean,
            val: val_mean,
            clip_skipped: skipped,
        });
    }

    let (_, best_epoch, params) = best.expect("at least one epoch");
    remover.tuned.params_mut().copy_from_slice(&params);
    Ok(FinetuneOutcome {
        remover,
        manifest: RunManifest {
            workflow: FINETUNE_WORKFLOW.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config_snapshot,
            seed: cfg.seed,
            datasets,
            epochs,
            best_epoch,
            checkpoint: None,
            encoder_resolution: ENCODER_RESOLUTION_NOTE.to_string(),
        },
    })
}
