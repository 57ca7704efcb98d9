use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, disjoint, inclusive integer-year age ranges.
///
/// A real-valued age `a` belongs to the bin `[lo, hi]` when `lo <= a < hi + 1`,
/// so 14.6 falls in 10–14 and 69.9 in 50–69.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgeGroupBins(Vec<(u32, u32)>);

impl AgeGroupBins {
    /// Bins must be non-empty, ascending and contiguous.
    pub fn new(bins: Vec<(u32, u32)>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidBins("no bins".into()));
        }
        for (i, &(lo, hi)) in bins.iter().enumerate() {
            if lo > hi {
                return Err(Error::InvalidBins(format!("bin {i} has lower > upper")));
            }
            if i > 0 && lo != bins[i - 1].1 + 1 {
                return Err(Error::InvalidBins(format!(
                    "bin {i} starts at {lo}, expected {}",
                    bins[i - 1].1 + 1
                )));
            }
        }
        Ok(Self(bins))
    }

    pub fn bins(&self) -> &[(u32, u32)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Covered interval as `[lower, upper + 1)` in real years.
    pub fn coverage(&self) -> (f64, f64) {
        (self.0[0].0 as f64, self.0[self.0.len() - 1].1 as f64 + 1.0)
    }

    pub fn bin_of(&self, age: f64) -> Result<usize> {
        if !age.is_finite() {
            return Err(Error::AgeNotCovered(age));
        }
        self.0
            .iter()
            .position(|&(lo, hi)| age >= lo as f64 && age < hi as f64 + 1.0)
            .ok_or(Error::AgeNotCovered(age))
    }

    pub fn label(&self, index: usize) -> String {
        let (lo, hi) = self.0[index];
        format!("{lo}-{hi}")
    }
}

impl Default for AgeGroupBins {
    fn default() -> Self {
        default_age_bins()
    }
}

/// The nine age groups used for evaluation (70+ excluded).
pub fn default_age_bins() -> AgeGroupBins {
    AgeGroupBins(vec![
        (0, 2),
        (3, 6),
        (7, 9),
        (10, 14),
        (15, 19),
        (20, 29),
        (30, 39),
        (40, 49),
        (50, 69),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_bins_cover_zero_to_sixty_nine() {
        let bins = default_age_bins();
        assert_eq!(bins.len(), 9);
        assert_eq!(bins.coverage(), (0.0, 70.0));
        assert_eq!(bins.label(bins.bin_of(17.0).unwrap()), "15-19");
        assert!(matches!(bins.bin_of(70.0), Err(Error::AgeNotCovered(_))));
        assert!(bins.bin_of(-0.5).is_err());
    }

    #[test]
    fn every_integer_age_maps_to_exactly_one_bin() {
        let bins = default_age_bins();
        for age in 0..=69u32 {
            let hits = bins
                .bins()
                .iter()
                .filter(|&&(lo, hi)| age >= lo && age <= hi)
                .count();
            assert_eq!(hits, 1, "age {age}");
            let (lo, hi) = bins.bins()[bins.bin_of(age as f64).unwrap()];
            assert!(lo <= age && age <= hi);
        }
    }

    #[test]
    fn rejects_gaps() {
        assert!(AgeGroupBins::new(vec![(0, 4), (6, 9)]).is_err());
        assert!(AgeGroupBins::new(vec![]).is_err());
    }
}
