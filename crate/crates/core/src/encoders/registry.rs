//! Name-keyed backend factories.
//!
//! The CLI resolves `encoder.image_text`, `encoder.face`, `encoder.perceptual`,
//! `encoder.age` and `eval.age_predictor` through these tables. Only the
//! shipped backends are registered by default; callers may add their own.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::doubles::{
    TestDoubleAgePredictor, TestDoubleFeatureExtractor, TestDoubleImageEncoder, TestDoubleImageText,
    TestDoubleSpec,
};
use super::{AgePredictor, DifferentiableAgePredictor, FeatureExtractor, ImageEncoder, ImageTextEncoder};
use crate::age::AgeRegressor;
use crate::error::{Error, Result};

pub const TEST_DOUBLE: &str = "test-double";
pub const SSR_REGRESSOR: &str = "ssr-regressor";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendOptions {
    pub seed: u64,
    /// Weights file for backends that need one.
    pub checkpoint: Option<PathBuf>,
}

type Factory<T> = Box<dyn Fn(&BackendOptions) -> Result<Arc<T>> + Send + Sync>;

pub struct BackendRegistry<T: ?Sized> {
    role: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> BackendRegistry<T> {
    pub fn new(role: &'static str) -> Self {
        Self {
            role,
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, factory: F) -> Result<()>
    where
        F: Fn(&BackendOptions) -> Result<Arc<T>> + Send + Sync + 'static,
    {
        if self.factories.contains_key(name) {
            return Err(Error::DuplicateBackend(format!("{}: {name}", self.role)));
        }
        self.factories.insert(name.to_string(), Box::new(factory));
        Ok(())
    }

    pub fn build(&self, name: &str, options: &BackendOptions) -> Result<Arc<T>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::UnknownBackend(format!(
                "{}: {name} (known: {})",
                self.role,
                self.names().join(", ")
            ))
        })?;
        factory(options)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

impl<T: ?Sized> std::fmt::Debug for BackendRegistry<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendRegistry")
            .field("role", &self.role)
            .field("names", &self.names())
            .finish()
    }
}

/// Resolved set of encoders used by the fine-tuning objective.
#[derive(Clone)]
pub struct Backends {
    pub image_text: Arc<dyn ImageTextEncoder>,
    pub face: Arc<dyn ImageEncoder>,
    pub perceptual: Arc<dyn FeatureExtractor>,
    pub age: Arc<dyn DifferentiableAgePredictor>,
}

impl Backends {
    /// All four roles backed by test doubles derived from one seed.
    pub fn test_doubles(seed: u64) -> Result<Self> {
        let opts = BackendOptions {
            seed,
            checkpoint: None,
        };
        Ok(Self {
            image_text: test_double_image_text(&opts)?,
            face: test_double_face(&opts)?,
            perceptual: test_double_perceptual(&opts),
            age: test_double_age(&opts)?,
        })
    }
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Backends { .. }")
    }
}

fn test_double_image_text(o: &BackendOptions) -> Result<Arc<TestDoubleImageText>> {
    Ok(Arc::new(TestDoubleImageText::new(TestDoubleSpec::with_seed(o.seed))?))
}

fn test_double_face(o: &BackendOptions) -> Result<Arc<TestDoubleImageEncoder>> {
    let spec = TestDoubleSpec {
        seed: o.seed.wrapping_add(1),
        dim: 64,
        ..TestDoubleSpec::default()
    };
    Ok(Arc::new(TestDoubleImageEncoder::new(spec)?))
}

fn test_double_perceptual(o: &BackendOptions) -> Arc<TestDoubleFeatureExtractor> {
    Arc::new(TestDoubleFeatureExtractor::new(o.seed.wrapping_add(2)))
}

fn test_double_age(o: &BackendOptions) -> Result<Arc<TestDoubleAgePredictor>> {
    Ok(Arc::new(TestDoubleAgePredictor::new(TestDoubleSpec::with_seed(
        o.seed.wrapping_add(3),
    ))?))
}

fn load_regressor(o: &BackendOptions) -> Result<Arc<AgeRegressor>> {
    let path = o
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config(format!("backend {SSR_REGRESSOR} needs a checkpoint path")))?;
    Ok(Arc::new(AgeRegressor::load(path)?))
}

/// One registry per backend role.
#[derive(Debug)]
pub struct Registries {
    pub image_text: BackendRegistry<dyn ImageTextEncoder>,
    pub face: BackendRegistry<dyn ImageEncoder>,
    pub perceptual: BackendRegistry<dyn FeatureExtractor>,
    pub age: BackendRegistry<dyn DifferentiableAgePredictor>,
    pub eval_age: BackendRegistry<dyn AgePredictor>,
}

impl Registries {
    pub fn empty() -> Self {
        Self {
            image_text: BackendRegistry::new("encoder.image_text"),
            face: BackendRegistry::new("encoder.face"),
            perceptual: BackendRegistry::new("encoder.perceptual"),
            age: BackendRegistry::new("encoder.age"),
            eval_age: BackendRegistry::new("eval.age_predictor"),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.image_text
            .register(TEST_DOUBLE, |o| Ok(test_double_image_text(o)? as Arc<dyn ImageTextEncoder>))
            .expect("fresh registry");
        r.face
            .register(TEST_DOUBLE, |o| Ok(test_double_face(o)? as Arc<dyn ImageEncoder>))
            .expect("fresh registry");
        r.perceptual
            .register(TEST_DOUBLE, |o| Ok(test_double_perceptual(o) as Arc<dyn FeatureExtractor>))
            .expect("fresh registry");
        r.age
            .register(TEST_DOUBLE, |o| Ok(test_double_age(o)? as Arc<dyn DifferentiableAgePredictor>))
            .expect("fresh registry");
        r.age
            .register(SSR_REGRESSOR, |o| Ok(load_regressor(o)? as Arc<dyn DifferentiableAgePredictor>))
            .expect("fresh registry");
        r.eval_age
            .register(TEST_DOUBLE, |o| Ok(test_double_age(o)? as Arc<dyn AgePredictor>))
            .expect("fresh registry");
        r.eval_age
            .register(SSR_REGRESSOR, |o| Ok(load_regressor(o)? as Arc<dyn AgePredictor>))
            .expect("fresh registry");
        r
    }
}

impl Default for Registries {
    fn default() -> Self {
        Self::with_defaults()
    }
}
