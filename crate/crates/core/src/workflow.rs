//! End-to-end runs driven by a [`RunConfig`], with manifests that are enough
//! to repeat them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::age::{train_age_estimator, AgeSample, EpochMetrics, TrainOutcome};
use crate::config::{DataSource, RunConfig};
use crate::data::{list_images, load_age_metadata, load_image, load_pair_manifest, SplitTag};
use crate::diffusion::ToyPredictor;
use crate::encoders::Registries;
use crate::error::{Error, Result};
use crate::image::{resize, AGE_SIDE};
use crate::losses::Objective;
use crate::pair::MakeupPair;
use crate::pipeline::{
    finetune, DatasetFingerprint, FinetuneOutcome, MakeupRemover, RunManifest, FINETUNE_WORKFLOW,
};
use crate::synthetic::{intensity_age_dataset, overlay_pairs, OverlaySpec};

pub const TRAIN_AGE_WORKFLOW: &str = "train-age";

/// Record of a `train-age` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeRunManifest {
    pub workflow: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub dataset: DatasetFingerprint,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub checkpoint: Option<PathBuf>,
}

impl AgeRunManifest {
    pub fn epoch_totals(&self) -> Vec<f64> {
        self.metrics.iter().map(|m| m.train_loss).collect()
    }
}

fn snapshot(cfg: &RunConfig) -> Result<serde_json::Value> {
    serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))
}

fn synthetic_pairs(cfg: &RunConfig, pairs: usize, seed: u64) -> Result<Vec<MakeupPair>> {
    let side = cfg.finetune.image_side;
    let spec = OverlaySpec {
        pairs,
        base_side: if side % 64 == 0 { 64 } else { side },
        side,
        seed,
        ..OverlaySpec::default()
    };
    overlay_pairs(&spec)
}

/// Training and validation pairs for `finetune`.
///
/// From files, validation comes from `paths.val_pairs` when given, otherwise
/// from rows of the training manifest tagged `val`.
pub fn finetune_pairs(cfg: &RunConfig) -> Result<(Vec<MakeupPair>, Vec<MakeupPair>)> {
    match cfg.data.source {
        DataSource::Synthetic => Ok((
            synthetic_pairs(cfg, cfg.data.synthetic_pairs, cfg.seed)?,
            synthetic_pairs(cfg, cfg.data.synthetic_val_pairs, cfg.seed.wrapping_add(1))?,
        )),
        DataSource::Files => {
            let path = cfg
                .paths
                .train_pairs
                .as_ref()
                .ok_or_else(|| Error::Config("paths.train_pairs is required with data.source = \"files\"".into()))?;
            let side = Some(cfg.finetune.image_side);
            let manifest = load_pair_manifest(path)?;
            let train = manifest.split(SplitTag::Train).load_pairs(side)?;
            let val = match &cfg.paths.val_pairs {
                Some(p) => load_pair_manifest(p)?.load_pairs(side)?,
                None => manifest.split(SplitTag::Val).load_pairs(side)?,
            };
            Ok((train, val))
        }
    }
}

/// Fine-tunes from `paths.resume` when set, otherwise from a fresh toy
/// predictor built from `[predictor]`.
pub fn run_finetune(cfg: &RunConfig, registries: &Registries) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    let (train, val) = finetune_pairs(cfg)?;
    let remover = match &cfg.paths.resume {
        Some(p) => MakeupRemover::load(p)?,
        None => MakeupRemover::from_base(ToyPredictor::new(cfg.predictor.clone())?, cfg.finetune.sampling())?,
    };
    let mut objective = Objective::new(cfg.encoder.resolve(registries)?, cfg.finetune.age_loss_variant);
    objective.prompts = cfg.finetune.prompts.clone();
    objective.weights = cfg.finetune.resolved_weights();
    objective.age_beta = cfg.finetune.age_beta;
    finetune(&train, &val, remover, &objective, &cfg.finetune, snapshot(cfg)?)
}

/// 64×64 samples for `train-age`. File ids are image file stems.
pub fn age_samples(cfg: &RunConfig) -> Result<Vec<AgeSample>> {
    match cfg.data.source {
        DataSource::Synthetic => intensity_age_dataset(cfg.data.synthetic_age_samples, cfg.seed),
        DataSource::Files => {
            let (dir, meta) = match (&cfg.paths.age_images, &cfg.paths.age_metadata) {
                (Some(d), Some(m)) => (d, m),
                _ => {
                    return Err(Error::Config(
                        "paths.age_images and paths.age_metadata are required with data.source = \"files\"".into(),
                    ))
                }
            };
            let ages = load_age_metadata(meta)?;
            list_images(dir)?
                .into_iter()
                .map(|p| {
                    let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                    let age = ages.get(&id).map_err(|e| Error::data(&p, e.to_string()))?;
                    let image = resize(&load_image(&p)?, AGE_SIDE).map_err(|e| Error::data(&p, e.to_string()))?;
                    Ok(AgeSample { image, age })
                })
                .collect()
        }
    }
}

fn age_fingerprint(samples: &[AgeSample]) -> DatasetFingerprint {
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.age.to_le_bytes());
        for v in s.image.data() {
            h.update(v.to_le_bytes());
        }
    }
    DatasetFingerprint {
        name: "age".into(),
        pairs: samples.len(),
        sha256: h.finalize().iter().map(|b| format!("{b:02x}")).collect(),
    }
}

pub fn run_train_age(cfg: &RunConfig) -> Result<(TrainOutcome, AgeRunManifest)> {
    cfg.validate()?;
    let samples = age_samples(cfg)?;
    let outcome = train_age_estimator(&samples, &cfg.train_age)?;
    let manifest = AgeRunManifest {
        workflow: TRAIN_AGE_WORKFLOW.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: snapshot(cfg)?,
        seed: cfg.train_age.seed,
        dataset: age_fingerprint(&samples),
        metrics: outcome.metrics.clone(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        checkpoint: None,
    };
    Ok((outcome, manifest))
}

/// Outcome of repeating a recorded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RerunReport {
    pub workflow: String,
    pub recorded: Vec<f64>,
    pub reproduced: Vec<f64>,
    /// Largest `|a - b| / max(|a|, tiny)` over epochs.
    pub max_rel_diff: f64,
    pub datasets_match: bool,
}

impl RerunReport {
    pub fn within(&self, tol: f64) -> bool {
        self.recorded.len() == self.reproduced.len() && self.max_rel_diff <= tol && self.datasets_match
    }
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Reads the `workflow` tag and configuration from a manifest file and runs
/// the workflow again.
pub fn rerun_manifest(path: impl AsRef<Path>, registries: &Registries) -> Result<RerunReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(path, e.to_string()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::data(path, format!("malformed manifest: {e}")))?;
    let workflow = value.get("workflow").and_then(|w| w.as_str()).unwrap_or_default().to_string();
    let config_of = |v: &serde_json::Value| -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_value(v.clone())
            .map_err(|e| Error::data(path, format!("manifest config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    };
    match workflow.as_str() {
        FINETUNE_WORKFLOW => {
            let recorded: RunManifest =
                serde_json::from_value(value).map_err(|e| Error::data(path, format!("malformed manifest: {e}")))?;
            let cfg = config_of(&recorded.config)?;
            let again = run_finetune(&cfg, registries)?.manifest;
            Ok(RerunReport {
                max_rel_diff: rel_diff(&recorded.epoch_totals(), &again.epoch_totals()),
                datasets_match: recorded.datasets == again.datasets,
                recorded: recorded.epoch_totals(),
                reproduced: again.epoch_totals(),
                workflow,
            })
        }
        TRAIN_AGE_WORKFLOW => {
            let recorded: AgeRunManifest =
                serde_json::from_value(value).map_err(|e| Error::data(path, format!("malformed manifest: {e}")))?;
            let cfg = config_of(&recorded.config)?;
            let (_, again) = run_train_age(&cfg)?;
            Ok(RerunReport {
                max_rel_diff: rel_diff(&recorded.epoch_totals(), &again.epoch_totals()),
                datasets_match: recorded.dataset == again.dataset,
                recorded: recorded.epoch_totals(),
                reproduced: again.epoch_totals(),
                workflow,
            })
        }
        other => Err(Error::data(path, format!("unknown workflow {other:?}"))),
    }
}
