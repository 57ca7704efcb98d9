use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::nn::seeded_rng;

pub const DEFAULT_FMR: f64 = 1e-4;
/// Impostor comparisons drawn per genuine comparison.
pub const IMPOSTOR_RATIO: usize = 10;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn validate(&self) -> Result<()> {
        if self.genuine.is_empty() {
            return Err(Error::Empty("genuine scores"));
        }
        if self.impostor.is_empty() {
            return Err(Error::Empty("impostor scores"));
        }
        if let Some(i) = self.genuine.iter().chain(&self.impostor).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }
}

/// A comparison is accepted when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub tmr: f64,
}

/// Points ordered by decreasing threshold, from `+inf` (reject all) to
/// `-inf` (accept all), with one point per distinct score in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

pub fn roc(scores: &ScoreSet) -> Result<RocCurve> {
    scores.validate()?;
    let mut g = scores.genuine.clone();
    let mut im = scores.impostor.clone();
    g.sort_by(|a, b| b.total_cmp(a));
    im.sort_by(|a, b| b.total_cmp(a));
    let mut thresholds: Vec<f64> = g.iter().chain(&im).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let (ng, ni) = (g.len() as f64, im.len() as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fmr: 0.0,
        tmr: 0.0,
    }];
    let (mut gi, mut ii) = (0, 0);
    for t in thresholds {
        while gi < g.len() && g[gi] >= t {
            gi += 1;
        }
        while ii < im.len() && im[ii] >= t {
            ii += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fmr: ii as f64 / ni,
            tmr: gi as f64 / ng,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fmr: 1.0,
        tmr: 1.0,
    });
    Ok(RocCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target_fmr: f64,
    /// Lowest threshold whose empirical FMR does not exceed the target.
    pub point: RocPoint,
    /// First point past the target, when one exists.
    pub bracket: Option<RocPoint>,
}

impl OperatingPoint {
    pub fn tmr(&self) -> f64 {
        self.point.tmr
    }
}

/// Conservative operating point: the sweep point with the most acceptances
/// whose empirical FMR stays at or below `target_fmr`.
pub fn tmr_at_fmr(curve: &RocCurve, target_fmr: f64) -> Result<OperatingPoint> {
    if !(0.0..=1.0).contains(&target_fmr) {
        return Err(Error::InvalidArgument(format!("target FMR {target_fmr} outside [0, 1]")));
    }
    let idx = curve
        .points
        .iter()
        .rposition(|p| p.fmr <= target_fmr)
        .ok_or(Error::Empty("ROC curve"))?;
    Ok(OperatingPoint {
        target_fmr,
        point: curve.points[idx],
        bracket: curve.points.get(idx + 1).copied(),
    })
}

/// Genuine scores pair `originals[i]` with `processed[i]`; each subject also
/// gets up to [`IMPOSTOR_RATIO`] impostor scores against other subjects'
/// processed images, drawn without replacement with a seeded generator.
pub fn build_score_set(originals: &[EmbeddingVector], processed: &[EmbeddingVector], seed: u64) -> Result<ScoreSet> {
    if originals.len() != processed.len() {
        return Err(Error::LengthMismatch {
            left: originals.len(),
            right: processed.len(),
        });
    }
    if originals.len() < 2 {
        return Err(Error::InvalidArgument("need at least two subjects for impostor pairs".into()));
    }
    let n = originals.len();
    let mut rng = seeded_rng(seed);
    let mut set = ScoreSet::default();
    for i in 0..n {
        set.genuine.push(originals[i].cosine(&processed[i])?);
        let k = IMPOSTOR_RATIO.min(n - 1);
        for j in sample(&mut rng, n - 1, k).into_iter() {
            let j = if j >= i { j + 1 } else { j };
            set.impostor.push(originals[i].cosine(&processed[j])?);
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores() {
        let c = roc(&ScoreSet {
            genuine: vec![0.9; 5],
            impostor: vec![0.1; 50],
        })
        .unwrap();
        for f in [0.0, 1e-4, 0.5, 1.0] {
            assert_eq!(tmr_at_fmr(&c, f).unwrap().tmr(), 1.0);
        }
        assert!(c.points.windows(2).all(|w| w[0].fmr <= w[1].fmr && w[0].tmr <= w[1].tmr));
    }

    #[test]
    fn chance_line() {
        let s: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let c = roc(&ScoreSet {
            genuine: s.clone(),
            impostor: s,
        })
        .unwrap();
        assert!(c.points.iter().all(|p| (p.fmr - p.tmr).abs() < 1e-12));
        let op = tmr_at_fmr(&c, 0.05).unwrap();
        assert_eq!(op.point.fmr, 0.05);
        assert_eq!(op.bracket.unwrap().fmr, 0.06);
    }

    #[test]
    fn score_set_ratio() {
        let mut rng = seeded_rng(2);
        let vecs: Vec<EmbeddingVector> = (0..15)
            .map(|_| {
                EmbeddingVector::normalize((0..8).map(|_| rand::Rng::random::<f64>(&mut rng) - 0.5).collect()).unwrap()
            })
            .collect();
        let s = build_score_set(&vecs, &vecs, 1).unwrap();
        assert_eq!(s.genuine.len(), 15);
        assert_eq!(s.impostor.len(), 150);
        assert!(s.genuine.iter().all(|g| (g - 1.0).abs() < 1e-12));
        assert_eq!(s, build_score_set(&vecs, &vecs, 1).unwrap());
    }
}
