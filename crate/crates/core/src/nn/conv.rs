use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::ParamAlloc;

/// Same-padded, stride-1 2-D convolution with an odd square kernel.
///
/// Weights are laid out `(out, in, ky, kx)` followed by `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    offset: usize,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, alloc: &mut ParamAlloc) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let n = out_channels * in_channels * kernel * kernel + out_channels;
        Self {
            in_channels,
            out_channels,
            kernel,
            offset: alloc.take(n),
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight_len() + self.out_channels
    }

    fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let p = &params[self.offset..self.offset + self.num_params()];
        p.split_at(self.weight_len())
    }

    /// He-style normal init scaled by `gain`; biases start at zero.
    pub fn init(&self, params: &mut [f64], rng: &mut impl Rng, gain: f64) {
        let fan_in = (self.in_channels * self.kernel * self.kernel) as f64;
        let std = gain * (2.0 / fan_in).sqrt();
        let wl = self.weight_len();
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

    pub fn forward(&self, params: &[f64], input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let hw = h * w;
        debug_assert_eq!(input.len(), self.in_channels * hw);
        let (weight, bias) = self.split(params);
        let (k, ic_n) = (self.kernel, self.in_channels);
        let pad = (k / 2) as isize;
        let mut out = vec![0.0; self.out_channels * hw];
        out.par_chunks_mut(hw).enumerate().for_each(|(oc, o)| {
            o.fill(bias[oc]);
            for ic in 0..ic_n {
                let plane = &input[ic * hw..(ic + 1) * hw];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight[((oc * ic_n + ic) * k + ky) * k + kx];
                        shifted_axpy(o, plane, h, w, ky as isize - pad, kx as isize - pad, wv);
                    }
                }
            }
        });
        out
    }

    /// Accumulates parameter gradients into `grad_params` and returns the
    /// gradient with respect to `input`.
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        h: usize,
        w: usize,
        grad_out: &[f64],
        grad_params: &mut [f64],
    ) -> Vec<f64> {
        let hw = h * w;
        let (weight, _) = self.split(params);
        let (k, ic_n, oc_n) = (self.kernel, self.in_channels, self.out_channels);
        let pad = (k / 2) as isize;
        let wl = self.weight_len();

        let gp = &mut grad_params[self.offset..self.offset + self.num_params()];
        let (gw, gb) = gp.split_at_mut(wl);
        gw.par_chunks_mut(ic_n * k * k)
            .zip(gb.par_iter_mut())
            .enumerate()
            .for_each(|(oc, (gw_oc, gb_oc))| {
                let g = &grad_out[oc * hw..(oc + 1) * hw];
                *gb_oc += g.iter().sum::<f64>();
                for ic in 0..ic_n {
                    let plane = &input[ic * hw..(ic + 1) * hw];
                    for ky in 0..k {
                        for kx in 0..k {
                            gw_oc[(ic * k + ky) * k + kx] +=
                                shifted_dot(g, plane, h, w, ky as isize - pad, kx as isize - pad);
                        }
                    }
                }
            });

        let mut grad_in = vec![0.0; ic_n * hw];
        grad_in.par_chunks_mut(hw).enumerate().for_each(|(ic, gi)| {
            for oc in 0..oc_n {
                let g = &grad_out[oc * hw..(oc + 1) * hw];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight[((oc * ic_n + ic) * k + ky) * k + kx];
                        // out[y][x] += w * in[y+dy][x+dx]  =>  gin[y+dy][x+dx] += w * g[y][x]
                        shifted_axpy(gi, g, h, w, pad - ky as isize, pad - kx as isize, wv);
                    }
                }
            }
        });
        grad_in
    }
}

/// `dst[y][x] += a * src[y+dy][x+dx]` wherever the source index is in bounds.
fn shifted_axpy(dst: &mut [f64], src: &[f64], h: usize, w: usize, dy: isize, dx: isize, a: f64) {
    if a == 0.0 {
        return;
    }
    let (y0, y1) = valid_span(h, dy);
    let (x0, x1) = valid_span(w, dx);
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let d = &mut dst[y * w + x0..y * w + x1];
        let s0 = (x0 as isize + dx) as usize;
        let s = &src[sy * w + s0..sy * w + s0 + (x1 - x0)];
        for (dv, sv) in d.iter_mut().zip(s) {
            *dv += a * sv;
        }
    }
}

/// `sum_{y,x} g[y][x] * src[y+dy][x+dx]` over in-bounds source indices.
fn shifted_dot(g: &[f64], src: &[f64], h: usize, w: usize, dy: isize, dx: isize) -> f64 {
    let (y0, y1) = valid_span(h, dy);
    let (x0, x1) = valid_span(w, dx);
    if x0 >= x1 {
        return 0.0;
    }
    let mut acc = 0.0;
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let s0 = (x0 as isize + dx) as usize;
        let gr = &g[y * w + x0..y * w + x1];
        let sr = &src[sy * w + s0..sy * w + s0 + (x1 - x0)];
        acc += gr.iter().zip(sr).map(|(a, b)| a * b).sum::<f64>();
    }
    acc
}

fn valid_span(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo.min(n), hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;

    fn naive(conv: &Conv2d, params: &[f64], input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (weight, bias) = conv.split(params);
        let k = conv.kernel as isize;
        let pad = k / 2;
        let mut out = vec![0.0; conv.out_channels * h * w];
        for oc in 0..conv.out_channels {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = bias[oc];
                    for ic in 0..conv.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (sy, sx) = (y + ky - pad, x + kx - pad);
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                let wi = ((oc * conv.in_channels + ic) * conv.kernel + ky as usize)
                                    * conv.kernel
                                    + kx as usize;
                                acc += weight[wi]
                                    * input[(ic * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    out[(oc * h + y as usize) * w + x as usize] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_naive_loop() {
        let mut alloc = ParamAlloc::new();
        let conv = Conv2d::new(2, 3, 3, &mut alloc);
        let mut params = vec![0.0; alloc.total()];
        conv.init(&mut params, &mut seeded_rng(1), 1.0);
        params[conv.weight_len()] = 0.25;
        let (h, w) = (5, 4);
        let input: Vec<f64> = (0..2 * h * w).map(|i| (i as f64 * 0.71).sin()).collect();
        let fast = conv.forward(&params, &input, h, w);
        let slow = naive(&conv, &params, &input, h, w);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut alloc = ParamAlloc::new();
        let conv = Conv2d::new(2, 2, 3, &mut alloc);
        let mut params = vec![0.0; alloc.total()];
        conv.init(&mut params, &mut seeded_rng(2), 1.0);
        let (h, w) = (4, 3);
        let input: Vec<f64> = (0..2 * h * w).map(|i| (i as f64 * 0.37).cos()).collect();
        let g: Vec<f64> = (0..2 * h * w).map(|i| (i as f64 * 0.53).sin()).collect();
        let loss = |p: &[f64], x: &[f64]| -> f64 {
            conv.forward(p, x, h, w).iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        let mut gp = vec![0.0; params.len()];
        let gx = conv.backward(&params, &input, h, w, &g, &mut gp);
        let eps = 1e-6;
        for i in 0..params.len() {
            let mut pp = params.clone();
            pp[i] += eps;
            let mut pm = params.clone();
            pm[i] -= eps;
            let fd = (loss(&pp, &input) - loss(&pm, &input)) / (2.0 * eps);
            assert!((fd - gp[i]).abs() < 1e-7, "param {i}");
        }
        for i in 0..input.len() {
            let mut xp = input.clone();
            xp[i] += eps;
            let mut xm = input.clone();
            xm[i] -= eps;
            let fd = (loss(&params, &xp) - loss(&params, &xm)) / (2.0 * eps);
            assert!((fd - gx[i]).abs() < 1e-7, "input {i}");
        }
    }
}
