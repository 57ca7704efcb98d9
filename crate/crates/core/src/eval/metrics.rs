use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bins::AgeGroupBins;
use crate::error::{Error, Result};

/// Predictions at or above this age count as adult.
pub const ADULT_AGE: f64 = 18.0;

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if let Some(i) = pred.iter().chain(truth).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i % pred.len()));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Fraction of predictions falling in the same bin as the truth. Predictions
/// outside the bins' coverage count as wrong; truths outside it are an error.
pub fn age_group_accuracy(pred: &[f64], truth: &[f64], bins: &AgeGroupBins) -> Result<f64> {
    check_pair(pred, truth)?;
    let mut hits = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        let tb = bins.bin_of(*t)?;
        if bins.bin_of(*p).ok() == Some(tb) {
            hits += 1;
        }
    }
    Ok(hits as f64 / pred.len() as f64)
}

pub fn minor_adult_accuracy(pred: &[f64], truth: &[f64], threshold: f64) -> Result<f64> {
    check_pair(pred, truth)?;
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| (**p >= threshold) == (**t >= threshold))
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Predicted ages for the same images before and after makeup removal.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationShift {
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

impl EstimationShift {
    pub fn new(before: Vec<f64>, after: Vec<f64>) -> Result<Self> {
        check_pair(&after, &before)?;
        Ok(Self { before, after })
    }

    /// Entries whose prediction went down.
    pub fn under_mask(&self) -> Vec<bool> {
        self.after.iter().zip(&self.before).map(|(a, b)| a < b).collect()
    }

    /// Entries whose prediction went up.
    pub fn over_mask(&self) -> Vec<bool> {
        self.after.iter().zip(&self.before).map(|(a, b)| a > b).collect()
    }
}

/// Count, mean and sample standard deviation. Empty sets report zeros; a
/// single value has zero spread.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { count: n, mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShiftStats {
    /// Signed change `after - before` over all entries.
    pub overall: Summary,
    /// Magnitudes `|after - before|` where the prediction decreased.
    pub under: Summary,
    /// Magnitudes where the prediction increased.
    pub over: Summary,
    pub unchanged: usize,
}

pub fn shift_stats(shift: &EstimationShift) -> Result<ShiftStats> {
    check_pair(&shift.after, &shift.before)?;
    let mut under = Vec::new();
    let mut over = Vec::new();
    let mut signed = Vec::with_capacity(shift.after.len());
    for (a, b) in shift.after.iter().zip(&shift.before) {
        signed.push(a - b);
        if a < b {
            under.push(b - a);
        } else if a > b {
            over.push(a - b);
        }
    }
    let unchanged = signed.len() - under.len() - over.len();
    Ok(ShiftStats {
        overall: Summary::of(&signed),
        under: Summary::of(&under),
        over: Summary::of(&over),
        unchanged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub prediction: f64,
    pub truth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMae {
    pub group: String,
    pub count: usize,
    pub mae: f64,
}

/// Per-group MAE in group-name order. Records without a group are left out.
pub fn demographic_slice(records: &[PredictionRecord]) -> Vec<GroupMae> {
    let mut groups: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for r in records {
        if let Some(g) = r.group.as_deref().filter(|g| !g.is_empty()) {
            let e = groups.entry(g).or_default();
            e.0 += 1;
            e.1 += (r.prediction - r.truth).abs();
        }
    }
    groups
        .into_iter()
        .map(|(g, (n, s))| GroupMae {
            group: g.to_string(),
            count: n,
            mae: s / n as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bins::default_age_bins;

    #[test]
    fn small_cases() {
        assert_eq!(mae(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 2.0);
        assert!(mae(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        let bins = default_age_bins();
        assert_eq!(age_group_accuracy(&[14.0], &[12.0], &bins).unwrap(), 1.0);
        assert_eq!(age_group_accuracy(&[15.0], &[12.0], &bins).unwrap(), 0.0);
        assert_eq!(age_group_accuracy(&[75.0], &[60.0], &bins).unwrap(), 0.0);
        assert!(age_group_accuracy(&[20.0], &[70.0], &bins).is_err());
        assert_eq!(minor_adult_accuracy(&[17.9], &[18.0], ADULT_AGE).unwrap(), 0.0);
        assert_eq!(minor_adult_accuracy(&[18.0], &[18.0], ADULT_AGE).unwrap(), 1.0);
    }

    #[test]
    fn shift_example() {
        let s = shift_stats(&EstimationShift::new(vec![20.0; 3], vec![18.0, 21.0, 20.0]).unwrap()).unwrap();
        assert_eq!((s.under.count, s.under.mean), (1, 2.0));
        assert_eq!((s.over.count, s.over.mean), (1, 1.0));
        assert_eq!(s.unchanged, 1);
        let same = shift_stats(&EstimationShift::new(vec![5.0; 4], vec![5.0; 4]).unwrap()).unwrap();
        assert_eq!((same.under.count, same.over.count, same.unchanged), (0, 0, 4));
    }

    #[test]
    fn slices() {
        let rec = |g: &str, p: f64, t: f64| PredictionRecord {
            id: String::new(),
            prediction: p,
            truth: t,
            group: Some(g.into()),
        };
        let s = demographic_slice(&[rec("a", 10.0, 12.0), rec("b", 30.0, 30.5), rec("a", 5.0, 1.0)]);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].count, s[0].mae), (2, 3.0));
        assert_eq!((s[1].count, s[1].mae), (1, 0.5));
    }
}
