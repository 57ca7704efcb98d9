use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A strictly increasing subsequence of timesteps in `[0, T)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepGrid(Vec<usize>);

impl StepGrid {
    pub fn new(steps: Vec<usize>, total_steps: usize) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Empty("step grid"));
        }
        if steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("step grid must be strictly increasing".into()));
        }
        if *steps.last().unwrap() >= total_steps {
            return Err(Error::InvalidArgument(format!(
                "step grid exceeds total steps {total_steps}"
            )));
        }
        Ok(Self(steps))
    }

    /// `n_steps` timesteps spread evenly over `[0, last]`, both ends included,
    /// rounded down. Used to align a short sampling grid with the endpoint of a
    /// longer inversion grid.
    pub fn ending_at(n_steps: usize, last: usize) -> Result<Self> {
        if n_steps == 0 || n_steps > last + 1 {
            return Err(Error::InvalidArgument(format!(
                "cannot place {n_steps} distinct steps in [0, {last}]"
            )));
        }
        let steps = if n_steps == 1 {
            vec![last]
        } else {
            (0..n_steps).map(|i| i * last / (n_steps - 1)).collect()
        };
        Self::new(steps, last + 1)
    }

    pub fn steps(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> usize {
        self.0[self.0.len() - 1]
    }
}

/// Uniform-stride grid anchored at zero: `t_i = i * floor(T / n)`.
pub fn make_step_grid(n_steps: usize, total_steps: usize) -> Result<StepGrid> {
    if n_steps == 0 || n_steps > total_steps {
        return Err(Error::InvalidArgument(format!(
            "n_steps must be in [1, {total_steps}], got {n_steps}"
        )));
    }
    let stride = total_steps / n_steps;
    StepGrid::new((0..n_steps).map(|i| i * stride).collect(), total_steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forty_of_eighty_has_stride_two() {
        let g = make_step_grid(40, 80).unwrap();
        assert_eq!(g.len(), 40);
        assert!(g.steps().windows(2).all(|w| w[1] - w[0] == 2));
        assert_eq!(g.steps()[0], 0);
        assert_eq!(g.last(), 78);
    }

    #[test]
    fn full_grid_is_identity() {
        let g = make_step_grid(80, 80).unwrap();
        assert_eq!(g.steps(), (0..80).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn six_of_eighty() {
        let g = make_step_grid(6, 80).unwrap();
        assert_eq!(g.steps(), &[0, 13, 26, 39, 52, 65]);
    }

    #[test]
    fn too_many_steps() {
        assert!(make_step_grid(81, 80).is_err());
        assert!(make_step_grid(0, 80).is_err());
    }

    #[test]
    fn aligned_grid_shares_endpoint() {
        let g = StepGrid::ending_at(6, 78).unwrap();
        assert_eq!(g.steps(), &[0, 15, 31, 46, 62, 78]);
        assert_eq!(StepGrid::ending_at(1, 10).unwrap().steps(), &[10]);
        assert!(StepGrid::ending_at(12, 10).is_err());
    }
}
