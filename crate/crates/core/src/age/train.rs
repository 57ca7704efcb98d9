use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::beta::{BetaConfig, SelfAdjustingBeta};
use super::loss::{band_weight, smoothed_l1_grad, weighted_loss};
use super::model::{AgeRegressor, AgeRegressorConfig};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, AGE_SIDE};
use crate::nn::{cosine_annealing, seeded_rng, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Floor of the cosine annealing schedule.
    pub min_lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub beta: BetaConfig,
    pub model: AgeRegressorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            lr: 1e-3,
            min_lr: 0.0,
            weight_decay: 1e-4,
            max_epochs: 200,
            patience: 15,
            val_fraction: 0.2,
            seed: 0,
            beta: BetaConfig::default(),
            model: AgeRegressorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.lr > 0.0
            && self.min_lr >= 0.0
            && self.min_lr <= self.lr
            && self.weight_decay >= 0.0
            && self.max_epochs > 0
            && self.patience > 0
            && (0.0..1.0).contains(&self.val_fraction);
        if !ok {
            return Err(Error::Config(format!("invalid age training config {self:?}")));
        }
        self.beta.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgeSample {
    pub image: ImageTensor,
    pub age: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(rename = "val_MAE")]
    pub val_mae: f64,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MAE.
    pub model: AgeRegressor,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn mae_of(model: &AgeRegressor, samples: &[&AgeSample]) -> Result<f64> {
    let errs: Vec<f64> = samples
        .par_iter()
        .map(|s| model.predict(&s.image).map(|p| (p - s.age).abs()))
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Trains an [`AgeRegressor`] with the band-weighted smoothed L1 loss and a
/// self-adjusting `beta`. A seeded split holds out `val_fraction` of the data
/// (at least one sample when there are two or more); with a single sample the
/// training MAE stands in for validation.
pub fn train_age_estimator(dataset: &[AgeSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Empty("age dataset"));
    }
    cfg.validate()?;
    for (i, s) in dataset.iter().enumerate() {
        if s.image.height() != AGE_SIDE || s.image.width() != AGE_SIDE {
            return Err(Error::InvalidArgument(format!(
                "sample {i} is {}x{}, expected {AGE_SIDE}x{AGE_SIDE}",
                s.image.height(),
                s.image.width()
            )));
        }
        if !s.age.is_finite() || s.age < 0.0 {
            return Err(Error::InvalidArgument(format!("sample {i} has age {}", s.age)));
        }
    }

    let mut rng = seeded_rng(cfg.seed ^ 0x5eed_a6e5);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if dataset.len() >= 2 {
        ((dataset.len() as f64 * cfg.val_fraction).round() as usize).clamp(1, dataset.len() - 1)
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let train: Vec<&AgeSample> = train_idx.iter().map(|&i| &dataset[i]).collect();
    let val: Vec<&AgeSample> = if val_idx.is_empty() {
        train.clone()
    } else {
        val_idx.iter().map(|&i| &dataset[i]).collect()
    };

    let mut model = AgeRegressor::new(AgeRegressorConfig {
        seed: cfg.seed,
        ..cfg.model.clone()
    })?;
    let mut adam = Adam::new(model.num_params(), cfg.weight_decay);
    let mut beta = SelfAdjustingBeta::new(&cfg.beta)?;
    let mut metrics = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params().to_vec());
    let mut stopped_early = false;
    let mut batch_order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let lr = cosine_annealing(cfg.lr, cfg.min_lr, epoch, cfg.max_epochs);
        batch_order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in batch_order.chunks(cfg.batch_size) {
            let b = beta.beta;
            let n = chunk.len() as f64;
            let per_sample: Vec<(f64, f64, Vec<f64>)> = chunk
                .par_iter()
                .map(|&i| {
                    let s = train[i];
                    let mut g = vec![0.0; model.num_params()];
                    let mut loss = 0.0;
                    let pred = model.forward_backward(
                        &s.image,
                        |p| {
                            loss = weighted_loss(s.age, p, b).unwrap_or(f64::NAN);
                            band_weight(s.age) * smoothed_l1_grad(s.age, p, b).unwrap_or(f64::NAN) / n
                        },
                        &mut g,
                    )?;
                    Ok((loss, (pred - s.age).abs(), g))
                })
                .collect::<Result<_>>()?;
            let mut grads = vec![0.0; model.num_params()];
            let mut batch_loss = 0.0;
            let mut abs_errors = Vec::with_capacity(chunk.len());
            for (loss, err, g) in &per_sample {
                batch_loss += loss;
                abs_errors.push(*err);
                for (a, v) in grads.iter_mut().zip(g) {
                    *a += v;
                }
            }
            if !batch_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss(format!(
                    "epoch {epoch}: batch loss {batch_loss}, beta {b}, abs errors {abs_errors:?}"
                )));
            }
            loss_sum += batch_loss;
            adam.step(model.params_mut(), &grads, lr);
            beta.update(&abs_errors)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_mae = mae_of(&model, &val)?;
        info!("age epoch {epoch}: loss {train_loss:.4} val MAE {val_mae:.3} beta {:.3}", beta.beta);
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            val_mae,
            beta: beta.beta,
        });
        if val_mae < best.0 {
            best = (val_mae, epoch, model.params().to_vec());
        } else if epoch - best.1 >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    model.params_mut().copy_from_slice(&best.2);
    Ok(TrainOutcome {
        model,
        metrics,
        best_epoch: best.1,
        stopped_early,
    })
}

pub fn write_metrics_csv(path: impl AsRef<Path>, metrics: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueRange;

    fn tiny(n: usize) -> Vec<AgeSample> {
        (0..n)
            .map(|i| {
                let v = i as f64 / n as f64;
                AgeSample {
                    image: ImageTensor::filled(AGE_SIDE, AGE_SIDE, ValueRange::Unit, v).unwrap(),
                    age: 10.0 + 50.0 * v,
                }
            })
            .collect()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            max_epochs: 3,
            batch_size: 4,
            model: AgeRegressorConfig {
                widths: vec![2, 2],
                ..AgeRegressorConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(train_age_estimator(&[], &TrainConfig::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn metrics_are_recorded_per_epoch() {
        let out = train_age_estimator(&tiny(10), &quick()).unwrap();
        assert_eq!(out.metrics.len(), 3);
        assert!(out.metrics.iter().all(|m| m.train_loss.is_finite() && m.beta >= 0.1 && m.beta <= 5.0));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(&p, &out.metrics).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_MAE,beta"));
        assert_eq!(text.lines().count(), 4);
    }
}
