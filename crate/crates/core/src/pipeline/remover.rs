use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::diffusion::{
    ddim_invert, ddim_sample_traced, make_cosine_schedule, make_step_grid, DiffusionSchedule, Latent, SampleTrace,
    StepGrid, ToyPredictor, ToyPredictorConfig, TrainablePredictor,
};
use crate::error::{Error, Result};
use crate::image::{validate_image, ImageTensor, ValueRange, DIFFUSION_SIDE};

pub const REMOVER_KIND: &str = "makeup-remover";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSettings {
    pub total_steps: usize,
    pub invert_steps: usize,
    pub sample_steps: usize,
    pub image_side: usize,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        Self {
            total_steps: 80,
            invert_steps: 40,
            sample_steps: 6,
            image_side: DIFFUSION_SIDE,
        }
    }
}

impl SamplingSettings {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps < 2
            || self.invert_steps == 0
            || self.sample_steps == 0
            || self.invert_steps > self.total_steps
            || self.sample_steps > self.total_steps
            || self.image_side == 0
        {
            return Err(Error::Config(format!("invalid sampling settings {self:?}")));
        }
        Ok(())
    }

    /// Inversion grid and a sampling grid ending at the same timestep.
    pub fn grids(&self) -> Result<(StepGrid, StepGrid)> {
        self.validate()?;
        let invert = make_step_grid(self.invert_steps, self.total_steps)?;
        let sample = if self.sample_steps == self.invert_steps {
            invert.clone()
        } else {
            StepGrid::ending_at(self.sample_steps, invert.last())?
        };
        Ok((invert, sample))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RemoverMeta {
    settings: SamplingSettings,
    base: ToyPredictorConfig,
    tuned: ToyPredictorConfig,
}

#[derive(Debug, Clone)]
pub struct MakeupRemover {
    pub base: ToyPredictor,
    pub tuned: ToyPredictor,
    settings: SamplingSettings,
    schedule: DiffusionSchedule,
    invert_grid: StepGrid,
    sample_grid: StepGrid,
}

impl PartialEq for MakeupRemover {
    fn eq(&self, other: &Self) -> bool {
        self.settings == other.settings
            && self.base.config() == other.base.config()
            && self.tuned.config() == other.tuned.config()
            && TrainablePredictor::params(&self.base)
                == TrainablePredictor::params(&other.base)
            && TrainablePredictor::params(&self.tuned)
                == TrainablePredictor::params(&other.tuned)
    }
}

impl MakeupRemover {
    pub fn new(base: ToyPredictor, tuned: ToyPredictor, settings: SamplingSettings) -> Result<Self> {
        let (invert_grid, sample_grid) = settings.grids()?;
        Ok(Self {
            base,
            tuned,
            settings,
            schedule: make_cosine_schedule(settings.total_steps)?,
            invert_grid,
            sample_grid,
        })
    }

    /// Starts tuning from a copy of the base predictor.
    pub fn from_base(base: ToyPredictor, settings: SamplingSettings) -> Result<Self> {
        Self::new(base.clone(), base, settings)
    }

    pub fn settings(&self) -> &SamplingSettings {
        &self.settings
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn sample_grid(&self) -> &StepGrid {
        &self.sample_grid
    }

    /// Rebuilds with different step counts, keeping both predictors.
    pub fn with_settings(self, settings: SamplingSettings) -> Result<Self> {
        Self::new(self.base, self.tuned, settings)
    }

    fn signed_input(&self, img: &ImageTensor) -> Result<ImageTensor> {
        let img = validate_image(img.clone(), self.settings.image_side)?;
        Ok(img.to_range(ValueRange::Signed))
    }

    /// Gradient-free inversion through the frozen base predictor.
    pub fn invert(&self, img: &ImageTensor) -> Result<Latent> {
        ddim_invert(&self.signed_input(img)?, &self.base, &self.schedule, &self.invert_grid)
    }

    pub fn sample_traced(&self, latent: &Latent) -> Result<SampleTrace> {
        ddim_sample_traced(latent, &self.tuned, &self.schedule, &self.sample_grid)
    }

    /// Inversion followed by sampling; the output is clamped and returned in
    /// the input's value range.
    pub fn remove(&self, img: &ImageTensor) -> Result<ImageTensor> {
        let latent = self.invert(img)?;
        let out = self.sample_traced(&latent)?.output.to_image()?;
        Ok(out.to_range(img.range()))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = RemoverMeta {
            settings: self.settings,
            base: self.base.config().clone(),
            tuned: self.tuned.config().clone(),
        };
        let mut ck = Checkpoint::new(REMOVER_KIND, serde_json::to_string(&meta)?);
        ck.push_tensor("base", self.base.params().to_vec());
        ck.push_tensor("tuned", self.tuned.params().to_vec());
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(REMOVER_KIND)?;
        let meta: RemoverMeta = serde_json::from_str(ck.meta())?;
        let base = ToyPredictor::from_parts(meta.base, ck.tensor("base")?.to_vec())?;
        let tuned = ToyPredictor::from_parts(meta.tuned, ck.tensor("tuned")?.to_vec())?;
        Self::new(base, tuned, meta.settings)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// One-call inference: made-up image in, cleaned image out.
pub fn remove_makeup(img: &ImageTensor, remover: &MakeupRemover) -> Result<ImageTensor> {
    remover.remove(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn remover(side: usize) -> MakeupRemover {
        let base = ToyPredictor::new(ToyPredictorConfig {
            output_gain: 0.05,
            seed: 3,
            ..ToyPredictorConfig::default()
        })
        .unwrap();
        MakeupRemover::from_base(
            base,
            SamplingSettings {
                image_side: side,
                ..SamplingSettings::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn grids_share_last_step() {
        let (inv, smp) = SamplingSettings::default().grids().unwrap();
        assert_eq!(inv.len(), 40);
        assert_eq!(smp.steps(), &[0, 15, 31, 46, 62, 78]);
        let bad = SamplingSettings {
            sample_steps: 81,
            ..SamplingSettings::default()
        };
        assert!(matches!(bad.grids(), Err(Error::Config(_))));
    }

    #[test]
    fn output_is_valid_and_deterministic() {
        let r = remover(16);
        let img = ImageTensor::from_fn(16, 16, ValueRange::Unit, |c, y, x| ((c + y * x) % 7) as f64 / 6.0).unwrap();
        let a = remove_makeup(&img, &r).unwrap();
        assert_eq!(a, remove_makeup(&img, &r).unwrap());
        assert_eq!((a.height(), a.width(), a.range()), (16, 16, ValueRange::Unit));
        assert!(remove_makeup(&ImageTensor::filled(8, 8, ValueRange::Unit, 0.5).unwrap(), &r).is_err());
        let back = MakeupRemover::from_checkpoint(&Checkpoint::from_bytes(&r.to_checkpoint().unwrap().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(remove_makeup(&img, &back).unwrap(), a);
    }
}
