use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Offset that keeps the cosine schedule's first betas from vanishing.
pub const COSINE_OFFSET: f64 = 0.008;
/// Upper bound on any single beta.
pub const MAX_BETA: f64 = 0.999;

/// Per-timestep noise coefficients for a `T`-step diffusion process.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    /// Builds a schedule from explicit betas, each in `(0, 1)`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs at least 2 steps, got {}",
                betas.len()
            )));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidArgument(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }
}

/// Cosine schedule: `alpha_bar(t) = f(t) / f(0)` with
/// `f(t) = cos^2(((t / T) + s) / (1 + s) * pi / 2)`, discretized so that step `i`
/// moves from `t = i` to `t = i + 1`, with each beta capped at [`MAX_BETA`].
pub fn make_cosine_schedule(total_steps: usize) -> Result<DiffusionSchedule> {
    if total_steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "total_steps must be >= 2, got {total_steps}"
        )));
    }
    let f = |t: f64| {
        let angle = (t / total_steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * FRAC_PI_2;
        angle.cos().powi(2)
    };
    let betas = (0..total_steps)
        .map(|i| (1.0 - f((i + 1) as f64) / f(i as f64)).min(MAX_BETA))
        .collect();
    DiffusionSchedule::from_betas(betas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eighty_step_schedule_is_monotone_and_capped() {
        let s = make_cosine_schedule(80).unwrap();
        assert_eq!(s.total_steps(), 80);
        assert_eq!(s.alpha_bars().len(), 80);
        assert_eq!(s.alphas().len(), 80);
        for w in s.alpha_bars().windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(s.betas().iter().all(|&b| b > 0.0 && b <= MAX_BETA));
        // the final step hits the cap since f(T) = 0
        assert_eq!(s.betas()[79], MAX_BETA);
        let a0 = s.alpha_bar(0);
        assert!(a0 < 1.0 && a0 > 0.99, "{a0}");
    }

    #[test]
    fn alpha_bar_matches_closed_form_before_cap() {
        let s = make_cosine_schedule(80).unwrap();
        let f = |t: f64| ((t / 80.0 + 0.008) / 1.008 * FRAC_PI_2).cos().powi(2);
        for t in 0..79 {
            let expected = f((t + 1) as f64) / f(0.0);
            assert!((s.alpha_bar(t) - expected).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn rejects_tiny_schedule() {
        assert!(make_cosine_schedule(1).is_err());
        assert!(make_cosine_schedule(0).is_err());
    }
}
