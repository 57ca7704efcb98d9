//! Versioned TOML run configuration.
//!
//! Every table rejects unknown keys. Missing keys take their defaults, so a
//! file containing only `schema = 1` is valid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::age::TrainConfig;
use crate::bins::{default_age_bins, AgeGroupBins};
use crate::diffusion::ToyPredictorConfig;
use crate::encoders::registry::{BackendOptions, TEST_DOUBLE};
use crate::encoders::{AgePredictor, Backends, Registries};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_FMR;
use crate::pipeline::FinetuneConfig;

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable that overrides `paths.cache_dir`.
pub const CACHE_ENV: &str = "DIFFCLEAN_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub image_text: String,
    pub face: String,
    pub perceptual: String,
    /// Differentiable age model supervising the regressor age term.
    pub age: String,
    pub age_checkpoint: Option<PathBuf>,
    /// Seed for test-double backends.
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            image_text: TEST_DOUBLE.into(),
            face: TEST_DOUBLE.into(),
            perceptual: TEST_DOUBLE.into(),
            age: TEST_DOUBLE.into(),
            age_checkpoint: None,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn resolve(&self, registries: &Registries) -> Result<Backends> {
        let plain = BackendOptions {
            seed: self.seed,
            checkpoint: None,
        };
        let age = BackendOptions {
            seed: self.seed,
            checkpoint: self.age_checkpoint.clone(),
        };
        Ok(Backends {
            image_text: registries.image_text.build(&self.image_text, &plain)?,
            face: registries.face.build(&self.face, &BackendOptions { seed: self.seed.wrapping_add(1), ..plain.clone() })?,
            perceptual: registries
                .perceptual
                .build(&self.perceptual, &BackendOptions { seed: self.seed.wrapping_add(2), ..plain.clone() })?,
            age: registries.age.build(&self.age, &BackendOptions { seed: self.seed.wrapping_add(3), ..age })?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub age_predictor: String,
    pub age_predictor_checkpoint: Option<PathBuf>,
    pub bins: AgeGroupBins,
    pub target_fmr: f64,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            age_predictor: TEST_DOUBLE.into(),
            age_predictor_checkpoint: None,
            bins: default_age_bins(),
            target_fmr: DEFAULT_FMR,
            confidence: 0.95,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn resolve_age_predictor(&self, registries: &Registries) -> Result<std::sync::Arc<dyn AgePredictor>> {
        registries.eval_age.build(
            &self.age_predictor,
            &BackendOptions {
                seed: self.seed.wrapping_add(3),
                checkpoint: self.age_predictor_checkpoint.clone(),
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Default location for checkpoints, manifests and logs.
    pub cache_dir: PathBuf,
    pub train_pairs: Option<PathBuf>,
    pub val_pairs: Option<PathBuf>,
    /// Where `finetune` writes its checkpoint; defaults under the cache dir.
    pub checkpoint: Option<PathBuf>,
    /// Remover checkpoint to continue fine-tuning from.
    pub resume: Option<PathBuf>,
    /// Directory of face images for `train-age`, named `<id>.<ext>`.
    pub age_images: Option<PathBuf>,
    /// JSON ages keyed by image id.
    pub age_metadata: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            cache_dir: PathBuf::from(".diffclean-cache"),
            train_pairs: None,
            val_pairs: None,
            checkpoint: None,
            resume: None,
            age_images: None,
            age_metadata: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Pair manifests and image directories named under `[paths]`.
    #[default]
    Files,
    /// Procedurally generated toy data, seeded by the master seed.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub synthetic_pairs: usize,
    pub synthetic_val_pairs: usize,
    pub synthetic_age_samples: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Files,
            synthetic_pairs: 16,
            synthetic_val_pairs: 0,
            synthetic_age_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema: u32,
    /// Master seed for synthetic data. `--seed` on the command line replaces
    /// it together with every per-section seed.
    pub seed: u64,
    pub paths: PathsConfig,
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub eval: EvalConfig,
    pub predictor: ToyPredictorConfig,
    pub finetune: FinetuneConfig,
    pub train_age: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            seed: 0,
            paths: PathsConfig::default(),
            data: DataConfig::default(),
            encoder: EncoderConfig::default(),
            eval: EvalConfig::default(),
            predictor: ToyPredictorConfig::default(),
            finetune: FinetuneConfig::default(),
            train_age: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::data(path, e.to_string()))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        AgeGroupBins::new(self.eval.bins.bins().to_vec()).map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.eval.target_fmr) || !(self.eval.confidence > 0.0 && self.eval.confidence < 1.0) {
            return Err(Error::Config("eval.target_fmr must lie in [0, 1] and eval.confidence in (0, 1)".into()));
        }
        self.finetune.validate()?;
        self.train_age.validate()?;
        crate::diffusion::ToyPredictor::new(self.predictor.clone()).map(|_| ())
    }

    /// Replaces the master seed and every per-section seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.finetune.seed = seed;
        self.train_age.seed = seed;
        self.predictor.seed = seed;
        self.encoder.seed = seed;
        self.eval.seed = seed;
        self
    }

    /// `DIFFCLEAN_CACHE` when set, otherwise `paths.cache_dir`.
    pub fn cache_dir(&self) -> PathBuf {
        std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| self.paths.cache_dir.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = RunConfig::from_toml_str("schema = 1").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.finetune.epochs, 5);
        assert_eq!(cfg.train_age.batch_size, 50);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default().with_seed(9);
        cfg.paths.train_pairs = Some("pairs.csv".into());
        cfg.finetune.weights = Some(crate::losses::LossWeights::clip_age());
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_schema() {
        assert!(RunConfig::from_toml_str("schema = 1\nbogus = 2").is_err());
        assert!(RunConfig::from_toml_str("schema = 1\n[finetune]\nepoch = 3").is_err());
        assert!(RunConfig::from_toml_str("schema = 2").is_err());
        assert!(RunConfig::from_toml_str("schema = 1\n[finetune]\nsample_steps = 81").is_err());
        assert!(RunConfig::from_toml_str("schema = 1\n[eval]\nbins = [[0, 2], [4, 9]]").is_err());
    }

    #[test]
    fn backends_resolve_by_name() {
        let r = Registries::with_defaults();
        assert!(EncoderConfig::default().resolve(&r).is_ok());
        let bad = EncoderConfig {
            face: "pretrained-face-adapter".into(),
            ..EncoderConfig::default()
        };
        assert!(matches!(bad.resolve(&r), Err(Error::UnknownBackend(_))));
    }
}
