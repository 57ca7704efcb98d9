use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::encoders::{AgePredictor, DifferentiableAgePredictor};
use crate::error::{Error, Result};
use crate::image::{resize, resize_vjp, validate_image, ImageTensor, ValueRange, AGE_SIDE};
use crate::nn::{act, pool, seeded_rng, Conv2d, Dense, ParamAlloc};

pub const AGE_REGRESSOR_KIND: &str = "age-regressor";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgeRegressorConfig {
    /// Channel width of each conv block; every block halves the resolution.
    pub widths: Vec<usize>,
    pub stages: usize,
    pub bins: usize,
    /// Output scale `V` of the soft stage-wise head, in years.
    pub age_span: f64,
    pub seed: u64,
}

impl Default for AgeRegressorConfig {
    fn default() -> Self {
        Self {
            widths: vec![8, 16, 32],
            stages: 3,
            bins: 3,
            age_span: 100.0,
            seed: 0,
        }
    }
}

impl AgeRegressorConfig {
    fn validate(&self) -> Result<()> {
        let pools = self.widths.len() as u32;
        if self.widths.is_empty()
            || self.widths.contains(&0)
            || AGE_SIDE % 2usize.pow(pools) != 0
            || self.stages == 0
            || self.bins < 2
            || !(self.age_span > 0.0 && self.age_span.is_finite())
        {
            return Err(Error::Config(format!("invalid age regressor config {self:?}")));
        }
        Ok(())
    }
}

/// Conv backbone with global pooling and soft stage-wise heads.
///
/// Stage `k` predicts a distribution `p_k` over `bins` bins, per-bin shifts
/// `eta_k` and a width scale `delta_k`:
/// `age = V * sum_k sum_i p_ki (i + eta_ki) / prod_{j<=k} bins (1 + delta_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeRegressor {
    config: AgeRegressorConfig,
    convs: Vec<Conv2d>,
    head: Dense,
    params: Vec<f64>,
}

struct Trace {
    /// Input to each conv block, followed by the final pooled map.
    block_inputs: Vec<Vec<f64>>,
    pre_act: Vec<Vec<f64>>,
    features: Vec<f64>,
    head_out: Vec<f64>,
    probs: Vec<Vec<f64>>,
    etas: Vec<Vec<f64>>,
    deltas: Vec<f64>,
    age: f64,
}

impl AgeRegressor {
    pub fn new(config: AgeRegressorConfig) -> Result<Self> {
        config.validate()?;
        let mut alloc = ParamAlloc::new();
        let mut convs = Vec::new();
        let mut ch = ImageTensor::CHANNELS;
        for &w in &config.widths {
            convs.push(Conv2d::new(ch, w, 3, &mut alloc));
            ch = w;
        }
        let head = Dense::new(ch, config.stages * (2 * config.bins + 1), &mut alloc);
        let mut params = vec![0.0; alloc.total()];
        let mut rng = seeded_rng(config.seed);
        for c in &convs {
            c.init(&mut params, &mut rng, 1.0);
        }
        head.init(&mut params, &mut rng, 0.1);
        Ok(Self {
            config,
            convs,
            head,
            params,
        })
    }

    pub fn config(&self) -> &AgeRegressorConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Predicted age for a 64×64 image.
    pub fn predict(&self, img: &ImageTensor) -> Result<f64> {
        let x = self.prepare(img)?;
        let age = self.forward(&x).age;
        if !age.is_finite() {
            return Err(Error::NonFiniteLoss(format!("age prediction {age}")));
        }
        Ok(age)
    }

    fn prepare(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        if img.height() != AGE_SIDE || img.width() != AGE_SIDE {
            return Err(Error::dims(
                format!("{AGE_SIDE}x{AGE_SIDE}"),
                format!("{}x{}", img.height(), img.width()),
            ));
        }
        Ok(img.to_range(ValueRange::Signed).into_data())
    }

    fn forward(&self, x: &[f64]) -> Trace {
        let mut side = AGE_SIDE;
        let mut block_inputs = vec![x.to_vec()];
        let mut pre_act = Vec::new();
        for conv in &self.convs {
            let input = block_inputs.last().unwrap();
            let pre = conv.forward(&self.params, input, side, side);
            let post = act::silu(&pre);
            pre_act.push(pre);
            block_inputs.push(pool::avg_pool(&post, conv.out_channels, side, side, 2));
            side /= 2;
        }
        let ch = self.convs.last().unwrap().out_channels;
        let features = pool::global_avg_pool(block_inputs.last().unwrap(), ch, side * side);
        let head_out = self.head.forward(&self.params, &features);
        let (s, b) = (self.config.stages, self.config.bins);
        let stride = 2 * b + 1;
        let mut probs = Vec::with_capacity(s);
        let mut etas = Vec::with_capacity(s);
        let mut deltas = Vec::with_capacity(s);
        let mut age = 0.0;
        let mut den = 1.0;
        for k in 0..s {
            let o = &head_out[k * stride..(k + 1) * stride];
            let p = act::softmax(&o[..b]);
            let eta = act::tanh(&o[b..2 * b]);
            let delta = o[2 * b].tanh();
            den *= b as f64 * (1.0 + delta);
            let num: f64 = (0..b).map(|i| p[i] * (i as f64 + eta[i])).sum();
            age += num / den;
            probs.push(p);
            etas.push(eta);
            deltas.push(delta);
        }
        Trace {
            block_inputs,
            pre_act,
            features,
            head_out,
            probs,
            etas,
            deltas,
            age: age * self.config.age_span,
        }
    }

    /// Backward pass for `d loss / d age = grad_age`. Accumulates parameter
    /// gradients when `grad_params` is given and returns `d loss / d input`.
    fn backward(&self, tr: &Trace, grad_age: f64, grad_params: Option<&mut [f64]>) -> Vec<f64> {
        let (s, b) = (self.config.stages, self.config.bins);
        let stride = 2 * b + 1;
        let v = self.config.age_span;
        let mut nums = Vec::with_capacity(s);
        let mut dens = Vec::with_capacity(s);
        let mut den = 1.0;
        for k in 0..s {
            den *= b as f64 * (1.0 + tr.deltas[k]);
            dens.push(den);
            nums.push((0..b).map(|i| tr.probs[k][i] * (i as f64 + tr.etas[k][i])).sum::<f64>());
        }
        let mut g_head = vec![0.0; tr.head_out.len()];
        for k in 0..s {
            let g_num = grad_age * v / dens[k];
            let g_p: Vec<f64> = (0..b).map(|i| g_num * (i as f64 + tr.etas[k][i])).collect();
            let g_logits = act::softmax_backward(&tr.probs[k], &g_p);
            let g_eta: Vec<f64> = (0..b).map(|i| g_num * tr.probs[k][i]).collect();
            let g_eta_pre = act::tanh_backward(&tr.etas[k], &g_eta);
            // den_m contains (1 + delta_k) for every m >= k
            let tail: f64 = (k..s).map(|m| nums[m] / dens[m]).sum();
            let g_delta = -grad_age * v * tail / (1.0 + tr.deltas[k]);
            let base = k * stride;
            g_head[base..base + b].copy_from_slice(&g_logits);
            g_head[base + b..base + 2 * b].copy_from_slice(&g_eta_pre);
            g_head[base + 2 * b] = g_delta * (1.0 - tr.deltas[k] * tr.deltas[k]);
        }
        let mut scratch;
        let gp: &mut [f64] = match grad_params {
            Some(g) => g,
            None => {
                scratch = vec![0.0; self.params.len()];
                &mut scratch
            }
        };
        let g_feat = self.head.backward(&self.params, &tr.features, &g_head, gp);
        let mut side = AGE_SIDE >> self.convs.len();
        let mut g = pool::global_avg_pool_vjp(&g_feat, side * side);
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let g_post = pool::avg_pool_vjp(&g, conv.out_channels, side, side, 2);
            side *= 2;
            let g_pre = act::silu_backward(&tr.pre_act[i], &g_post);
            g = conv.backward(&self.params, &tr.block_inputs[i], side, side, &g_pre, gp);
        }
        g
    }

    /// Prediction and `d age / d params` accumulated (scaled by `grad_age`).
    pub(crate) fn forward_backward(&self, img: &ImageTensor, grad_age: impl FnOnce(f64) -> f64, grad_params: &mut [f64]) -> Result<f64> {
        let x = self.prepare(img)?;
        let tr = self.forward(&x);
        let g = grad_age(tr.age);
        if g != 0.0 {
            self.backward(&tr, g, Some(grad_params));
        }
        Ok(tr.age)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(AGE_REGRESSOR_KIND, serde_json::to_string(&self.config)?);
        ck.push_tensor("params", self.params.clone());
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(AGE_REGRESSOR_KIND)?;
        let config: AgeRegressorConfig = serde_json::from_str(ck.meta())?;
        let mut model = Self::new(config)?;
        let params = ck.tensor("params")?;
        if params.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                params.len()
            )));
        }
        model.params.copy_from_slice(params);
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Area-resizes square inputs whose side is a multiple of 64.
    fn fit(&self, img: &ImageTensor) -> Result<ImageTensor> {
        if img.height() != img.width() || img.height() % AGE_SIDE != 0 {
            return validate_image(img.clone(), AGE_SIDE);
        }
        resize(img, AGE_SIDE)
    }
}

impl AgePredictor for AgeRegressor {
    fn predict_age(&self, img: &ImageTensor) -> Result<f64> {
        self.predict(&self.fit(img)?)
    }
}

impl DifferentiableAgePredictor for AgeRegressor {
    fn predict_age_with_grad(&self, img: &ImageTensor) -> Result<(f64, Vec<f64>)> {
        let small = self.fit(img)?;
        let x = self.prepare(&small)?;
        let tr = self.forward(&x);
        // prepare() maps to signed range; chain back to the caller's range
        let (scale, _) = small.range().affine_to(ValueRange::Signed);
        let g: Vec<f64> = self.backward(&tr, 1.0, None).into_iter().map(|v| v * scale).collect();
        let g = if img.height() == AGE_SIDE { g } else { resize_vjp(img.height(), AGE_SIDE, &g)? };
        Ok((tr.age, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> AgeRegressor {
        AgeRegressor::new(AgeRegressorConfig {
            widths: vec![2, 3],
            seed: 7,
            ..AgeRegressorConfig::default()
        })
        .unwrap()
    }

    fn img(phase: f64) -> ImageTensor {
        ImageTensor::from_fn(AGE_SIDE, AGE_SIDE, ValueRange::Unit, |c, y, x| {
            0.5 + 0.3 * ((c as f64 + 0.2 * y as f64 - 0.15 * x as f64) + phase).sin()
        })
        .unwrap()
    }

    #[test]
    fn prediction_is_finite_and_deterministic() {
        let m = small();
        let a = m.predict(&img(0.0)).unwrap();
        assert!(a.is_finite());
        assert_eq!(a, m.predict(&img(0.0)).unwrap());
        let wrong = ImageTensor::filled(32, 32, ValueRange::Unit, 0.5).unwrap();
        assert!(matches!(m.predict(&wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut m = small();
        let x = img(0.4);
        let mut g = vec![0.0; m.num_params()];
        m.forward_backward(&x, |_| 1.0, &mut g).unwrap();
        let n = m.num_params();
        for i in (0..n).step_by(7).chain(n - 21..n) {
            let orig = m.params[i];
            m.params[i] = orig + 1e-5;
            let hi = m.predict(&x).unwrap();
            m.params[i] = orig - 1e-5;
            let lo = m.predict(&x).unwrap();
            m.params[i] = orig;
            let fd = (hi - lo) / 2e-5;
            assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let m = small();
        let x = img(1.1).to_range(ValueRange::Signed);
        let (_, g) = m.predict_age_with_grad(&x).unwrap();
        for i in (0..x.len()).step_by(601) {
            let mut d = x.data().to_vec();
            d[i] += 1e-5;
            let hi = m.predict_age(&ImageTensor::from_raw(64, 64, ValueRange::Signed, d.clone()).unwrap()).unwrap();
            d[i] -= 2e-5;
            let lo = m.predict_age(&ImageTensor::from_raw(64, 64, ValueRange::Signed, d).unwrap()).unwrap();
            let fd = (hi - lo) / 2e-5;
            assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = small();
        let back = AgeRegressor::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().unwrap().to_bytes()).unwrap()).unwrap();
        assert_eq!(m, back);
    }
}
