use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BetaConfig {
    pub initial: f64,
    pub momentum: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for BetaConfig {
    fn default() -> Self {
        Self {
            initial: 1.0,
            momentum: 0.9,
            min: 0.1,
            max: 5.0,
        }
    }
}

impl BetaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min > 0.0
            && self.min <= self.max
            && self.max.is_finite()
            && self.momentum > 0.0
            && self.momentum < 1.0
            && (self.min..=self.max).contains(&self.initial);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid beta settings {self:?}")))
        }
    }
}

/// Smoothed-L1 transition point driven by running statistics of absolute errors.
///
/// `beta = clamp(mean - var, min, max)` where mean and var are exponential
/// moving averages of the per-batch mean and variance of `|a - a_hat|`. The
/// first update seeds the averages directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfAdjustingBeta {
    pub beta: f64,
    pub running_mean: f64,
    pub running_var: f64,
    pub momentum: f64,
    pub bounds: (f64, f64),
    pub updates: u64,
}

impl SelfAdjustingBeta {
    pub fn new(cfg: &BetaConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            beta: cfg.initial,
            running_mean: 0.0,
            running_var: 0.0,
            momentum: cfg.momentum,
            bounds: (cfg.min, cfg.max),
            updates: 0,
        })
    }

    pub fn update(&mut self, batch_abs_errors: &[f64]) -> Result<f64> {
        if batch_abs_errors.is_empty() {
            return Err(Error::Empty("error batch"));
        }
        if let Some(bad) = batch_abs_errors.iter().find(|e| !e.is_finite() || **e < 0.0) {
            return Err(Error::InvalidArgument(format!("absolute error {bad}")));
        }
        let n = batch_abs_errors.len() as f64;
        let mean = batch_abs_errors.iter().sum::<f64>() / n;
        let var = batch_abs_errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        if self.updates == 0 {
            self.running_mean = mean;
            self.running_var = var;
        } else {
            let m = self.momentum;
            self.running_mean = m * self.running_mean + (1.0 - m) * mean;
            self.running_var = m * self.running_var + (1.0 - m) * var;
        }
        self.updates += 1;
        self.beta = (self.running_mean - self.running_var).clamp(self.bounds.0, self.bounds.1);
        Ok(self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_errors_reach_fixed_point() {
        let mut b = SelfAdjustingBeta::new(&BetaConfig::default()).unwrap();
        for _ in 0..200 {
            b.update(&[2.0; 8]).unwrap();
        }
        assert_eq!(b.running_var, 0.0);
        assert!((b.beta - 2.0).abs() < 1e-12);
    }

    #[test]
    fn clamps_to_floor() {
        let mut b = SelfAdjustingBeta::new(&BetaConfig::default()).unwrap();
        // errors {0, 2x}: mean x, variance x^2, candidate x - x^2 = -0.3
        let x = (1.0 + 2.2f64.sqrt()) / 2.0;
        b.update(&[0.0, 2.0 * x]).unwrap();
        assert!((b.running_mean - b.running_var + 0.3).abs() < 1e-12);
        assert_eq!(b.beta, 0.1);
        assert!(b.update(&[]).is_err());
    }
}
