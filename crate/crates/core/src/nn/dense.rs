use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ParamAlloc;

/// Fully connected layer, weights `(out, in)` row-major then `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    offset: usize,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, alloc: &mut ParamAlloc) -> Self {
        Self {
            inputs,
            outputs,
            offset: alloc.take(inputs * outputs + outputs),
        }
    }

    pub fn num_params(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    pub fn init(&self, params: &mut [f64], rng: &mut impl Rng, gain: f64) {
        let std = gain / (self.inputs as f64).sqrt();
        let wl = self.inputs * self.outputs;
        let p = &mut params[self.offset..self.offset + self.num_params()];
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in p[..wl].iter_mut() {
                *v = normal.sample(rng);
            }
        } else {
            p[..wl].fill(0.0);
        }
        p[wl..].fill(0.0);
    }

    pub fn bias_mut<'a>(&self, params: &'a mut [f64]) -> &'a mut [f64] {
        let start = self.offset + self.inputs * self.outputs;
        &mut params[start..start + self.outputs]
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let p = &params[self.offset..self.offset + self.num_params()];
        let (w, b) = p.split_at(self.inputs * self.outputs);
        (0..self.outputs)
            .map(|o| {
                b[o] + w[o * self.inputs..(o + 1) * self.inputs]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn backward(&self, params: &[f64], x: &[f64], grad_out: &[f64], grad_params: &mut [f64]) -> Vec<f64> {
        let p = &params[self.offset..self.offset + self.num_params()];
        let w = &p[..self.inputs * self.outputs];
        let gp = &mut grad_params[self.offset..self.offset + self.num_params()];
        let (gw, gb) = gp.split_at_mut(self.inputs * self.outputs);
        let mut gx = vec![0.0; self.inputs];
        for o in 0..self.outputs {
            let g = grad_out[o];
            gb[o] += g;
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut gw[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += g * x[i];
                gx[i] += g * row[i];
            }
        }
        gx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut alloc = ParamAlloc::new();
        let d = Dense::new(3, 2, &mut alloc);
        let mut params = vec![0.0; alloc.total()];
        d.init(&mut params, &mut seeded_rng(3), 1.0);
        let x = vec![0.2, -0.4, 1.5];
        let g = vec![0.7, -1.1];
        let f = |p: &[f64], x: &[f64]| -> f64 {
            d.forward(p, x).iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        let mut gp = vec![0.0; params.len()];
        let gx = d.backward(&params, &x, &g, &mut gp);
        for i in 0..params.len() {
            let mut pp = params.clone();
            pp[i] += 1e-6;
            let mut pm = params.clone();
            pm[i] -= 1e-6;
            assert!(((f(&pp, &x) - f(&pm, &x)) / 2e-6 - gp[i]).abs() < 1e-8);
        }
        for i in 0..3 {
            let mut xp = x.clone();
            xp[i] += 1e-6;
            let mut xm = x.clone();
            xm[i] -= 1e-6;
            assert!(((f(&params, &xp) - f(&params, &xm)) / 2e-6 - gx[i]).abs() < 1e-8);
        }
    }
}
