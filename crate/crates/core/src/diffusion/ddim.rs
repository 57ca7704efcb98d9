//! Deterministic DDIM updates (eta = 0).
//!
//! A grid `[t_0 < t_1 < .. < t_{n-1}]` defines the chain
//! `clean (alpha_bar = 1) <-> t_0 <-> t_1 <-> .. <-> t_{n-1}`.
//! Sampling step `t_{i+1} -> t_i` evaluates `eps(x_{t_{i+1}}, t_{i+1})`; the
//! matching inversion step `t_i -> t_{i+1}` evaluates the predictor at the
//! target timestep on the current state, `eps(x_{t_i}, t_{i+1})`.

use super::{DiffusionSchedule, Latent, NoisePredictor, StepGrid, TrainablePredictor};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Coefficients `(c_x, c_eps)` of the update `x_to = c_x * x + c_eps * eps`
/// that moves a state from `alpha_bar_from` to `alpha_bar_to`.
pub fn step_coefficients(alpha_bar_from: f64, alpha_bar_to: f64) -> (f64, f64) {
    let c_x = (alpha_bar_to / alpha_bar_from).sqrt();
    let c_eps = (1.0 - alpha_bar_to).sqrt()
        - alpha_bar_to.sqrt() * (1.0 - alpha_bar_from).sqrt() / alpha_bar_from.sqrt();
    (c_x, c_eps)
}

/// One DDIM update: predict `x_0` from `x` and `eps`, then re-noise to `alpha_bar_to`.
pub fn ddim_step(x: &[f64], eps: &[f64], alpha_bar_from: f64, alpha_bar_to: f64) -> Vec<f64> {
    let (c_x, c_eps) = step_coefficients(alpha_bar_from, alpha_bar_to);
    x.iter().zip(eps).map(|(xv, ev)| c_x * xv + c_eps * ev).collect()
}

fn check_grid(schedule: &DiffusionSchedule, grid: &StepGrid) -> Result<()> {
    if grid.last() >= schedule.total_steps() {
        return Err(Error::InvalidArgument(format!(
            "grid reaches t={} but schedule has {} steps",
            grid.last(),
            schedule.total_steps()
        )));
    }
    Ok(())
}

/// Maps a signed-range image to its deterministic latent at `grid.last()`.
pub fn ddim_invert(
    img: &ImageTensor,
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    grid: &StepGrid,
) -> Result<Latent> {
    check_grid(schedule, grid)?;
    let mut x = Latent::from_image(img)?;
    let mut ab_from = 1.0;
    for &t in grid.steps() {
        let ab_to = schedule.alpha_bar(t);
        let eps = predictor.predict(&x, t)?;
        x = Latent::new(x.height(), x.width(), ddim_step(x.data(), &eps, ab_from, ab_to))?;
        ab_from = ab_to;
    }
    Ok(x)
}

/// Maps a latent at `grid.last()` back to a clean-image estimate. The result is
/// not clamped.
pub fn ddim_sample(
    latent: &Latent,
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    grid: &StepGrid,
) -> Result<Latent> {
    Ok(ddim_sample_traced(latent, predictor, schedule, grid)?.output)
}

/// Result of a sampling pass that keeps the intermediate states for backprop.
#[derive(Debug, Clone)]
pub struct SampleTrace {
    /// `states[k]` is the input to the k-th update (k = 0 is the latent).
    pub states: Vec<Latent>,
    pub output: Latent,
}

fn sample_transitions(schedule: &DiffusionSchedule, grid: &StepGrid) -> Vec<(usize, f64, f64)> {
    let steps = grid.steps();
    (0..steps.len())
        .rev()
        .map(|i| {
            let t = steps[i];
            let ab_to = if i > 0 { schedule.alpha_bar(steps[i - 1]) } else { 1.0 };
            (t, schedule.alpha_bar(t), ab_to)
        })
        .collect()
}

pub fn ddim_sample_traced(
    latent: &Latent,
    predictor: &dyn NoisePredictor,
    schedule: &DiffusionSchedule,
    grid: &StepGrid,
) -> Result<SampleTrace> {
    check_grid(schedule, grid)?;
    let mut states = Vec::with_capacity(grid.len());
    let mut x = latent.clone();
    for (t, ab_from, ab_to) in sample_transitions(schedule, grid) {
        let eps = predictor.predict(&x, t)?;
        let next = Latent::new(x.height(), x.width(), ddim_step(x.data(), &eps, ab_from, ab_to))?;
        states.push(std::mem::replace(&mut x, next));
    }
    Ok(SampleTrace { states, output: x })
}

/// Backpropagates `grad_output` (dL/d output) through a traced sampling pass.
/// Parameter gradients are accumulated into `grad_params`; the gradient with
/// respect to the starting latent is returned.
pub fn ddim_sample_backward(
    trace: &SampleTrace,
    predictor: &dyn TrainablePredictor,
    schedule: &DiffusionSchedule,
    grid: &StepGrid,
    grad_output: &[f64],
    grad_params: &mut [f64],
) -> Result<Vec<f64>> {
    let transitions = sample_transitions(schedule, grid);
    if transitions.len() != trace.states.len() {
        return Err(Error::InvalidArgument("trace does not match grid".into()));
    }
    let mut g = grad_output.to_vec();
    for (state, &(t, ab_from, ab_to)) in trace.states.iter().zip(&transitions).rev() {
        let (c_x, c_eps) = step_coefficients(ab_from, ab_to);
        let g_eps: Vec<f64> = g.iter().map(|v| c_eps * v).collect();
        let g_through = predictor.vjp(state, t, &g_eps, grad_params)?;
        for (gv, gt) in g.iter_mut().zip(&g_through) {
            *gv = c_x * *gv + gt;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::predictor::ZeroPredictor;
    use crate::diffusion::{make_cosine_schedule, make_step_grid, ToyPredictor, ToyPredictorConfig};
    use crate::image::ValueRange;

    fn image(side: usize) -> ImageTensor {
        ImageTensor::from_fn(side, side, ValueRange::Signed, |c, y, x| {
            (((c * 31 + y * 7 + x * 3) % 17) as f64 / 8.0 - 1.0).clamp(-1.0, 1.0)
        })
        .unwrap()
    }

    #[test]
    fn zero_predictor_closed_forms() {
        let s = make_cosine_schedule(80).unwrap();
        let g = make_step_grid(40, 80).unwrap();
        let img = image(8);
        let lat = ddim_invert(&img, &ZeroPredictor, &s, &g).unwrap();
        let scale = s.alpha_bar(g.last()).sqrt();
        for (l, p) in lat.data().iter().zip(img.data()) {
            assert!((l - scale * p).abs() < 1e-12);
        }
        let back = ddim_sample(&lat, &ZeroPredictor, &s, &g).unwrap();
        for (b, l) in back.data().iter().zip(lat.data()) {
            assert!((b - l / scale).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_backward_matches_finite_differences() {
        let s = make_cosine_schedule(20).unwrap();
        let g = make_step_grid(4, 20).unwrap();
        let net = ToyPredictor::new(ToyPredictorConfig {
            width: 3,
            depth: 1,
            time_features: 4,
            output_gain: 0.2,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let lat = Latent::new(3, 3, (0..27).map(|i| (i as f64 * 0.41).sin() * 0.3).collect()).unwrap();
        let w: Vec<f64> = (0..27).map(|i| (i as f64 * 0.17).cos()).collect();
        let loss = |net: &ToyPredictor, lat: &Latent| -> f64 {
            ddim_sample(lat, net, &s, &g)
                .unwrap()
                .data()
                .iter()
                .zip(&w)
                .map(|(a, b)| a * b)
                .sum()
        };
        let trace = ddim_sample_traced(&lat, &net, &s, &g).unwrap();
        let mut gp = vec![0.0; net.num_params()];
        let gl = ddim_sample_backward(&trace, &net, &s, &g, &w, &mut gp).unwrap();
        let eps = 1e-6;
        for i in (0..net.num_params()).step_by(5) {
            let mut a = net.clone();
            a.params_mut()[i] += eps;
            let mut b = net.clone();
            b.params_mut()[i] -= eps;
            let fd = (loss(&a, &lat) - loss(&b, &lat)) / (2.0 * eps);
            assert!((fd - gp[i]).abs() < 1e-5 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", gp[i]);
        }
        for i in 0..27 {
            let mut d = lat.data().to_vec();
            d[i] += eps;
            let a = Latent::new(3, 3, d.clone()).unwrap();
            d[i] -= 2.0 * eps;
            let b = Latent::new(3, 3, d).unwrap();
            let fd = (loss(&net, &a) - loss(&net, &b)) / (2.0 * eps);
            assert!((fd - gl[i]).abs() < 1e-5 * (1.0 + fd.abs()), "latent {i}");
        }
    }

    #[test]
    fn unsigned_image_is_rejected() {
        let s = make_cosine_schedule(10).unwrap();
        let g = make_step_grid(2, 10).unwrap();
        let img = ImageTensor::filled(4, 4, ValueRange::Unit, 0.5).unwrap();
        assert!(ddim_invert(&img, &ZeroPredictor, &s, &g).is_err());
    }
}
