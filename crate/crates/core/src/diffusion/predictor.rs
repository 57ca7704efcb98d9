use serde::{Deserialize, Serialize};

use super::Latent;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::nn::{act, seeded_rng, Conv2d, Dense, ParamAlloc};

/// A noise-prediction network `eps(x_t, t)`.
///
/// Implementations must be deterministic for fixed parameters and safe to call
/// concurrently.
pub trait NoisePredictor: Send + Sync {
    fn predict(&self, x: &Latent, t: usize) -> Result<Vec<f64>>;
}

/// A predictor whose parameters can be optimized.
pub trait TrainablePredictor: NoisePredictor {
    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Vector-Jacobian product at `(x, t)`: accumulates `d<eps, grad_out>/dparams`
    /// into `grad_params` and returns `d<eps, grad_out>/dx`.
    fn vjp(&self, x: &Latent, t: usize, grad_out: &[f64], grad_params: &mut [f64]) -> Result<Vec<f64>>;
}

/// A predictor that always returns zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl NoisePredictor for ZeroPredictor {
    fn predict(&self, x: &Latent, _t: usize) -> Result<Vec<f64>> {
        Ok(vec![0.0; x.data().len()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyPredictorConfig {
    /// Hidden channel count.
    pub width: usize,
    /// Number of residual hidden conv blocks between input and output convs.
    pub depth: usize,
    /// Size of the sinusoidal timestep features.
    pub time_features: usize,
    /// Scale on the He init of hidden layers.
    pub init_gain: f64,
    /// Scale on the output conv init; 0 makes the fresh network predict zero.
    pub output_gain: f64,
    pub seed: u64,
}

impl Default for ToyPredictorConfig {
    fn default() -> Self {
        Self {
            width: 8,
            depth: 1,
            time_features: 16,
            init_gain: 1.0,
            output_gain: 0.0,
            seed: 0,
        }
    }
}

/// Small residual conv net with sinusoidal timestep conditioning:
///
/// ```text
/// h0 = silu(conv_in(x) + time_proj(sinusoid(t)))
/// h_{k+1} = h_k + silu(conv_k(h_k))
/// eps = conv_out(h_depth)
/// ```
#[derive(Debug, Clone)]
pub struct ToyPredictor {
    config: ToyPredictorConfig,
    conv_in: Conv2d,
    time_proj: Dense,
    hidden: Vec<Conv2d>,
    conv_out: Conv2d,
    params: Vec<f64>,
}

pub const TOY_PREDICTOR_KIND: &str = "toy-predictor";

impl ToyPredictor {
    pub fn new(config: ToyPredictorConfig) -> Result<Self> {
        let mut net = Self::layout(config)?;
        let mut rng = seeded_rng(net.config.seed);
        let gain = net.config.init_gain;
        net.conv_in.init(&mut net.params, &mut rng, gain);
        net.time_proj.init(&mut net.params, &mut rng, gain);
        for layer in &net.hidden {
            layer.init(&mut net.params, &mut rng, gain);
        }
        net.conv_out
            .init(&mut net.params, &mut rng, net.config.output_gain);
        Ok(net)
    }

    fn layout(config: ToyPredictorConfig) -> Result<Self> {
        if config.width == 0 || config.time_features < 2 || config.time_features % 2 != 0 {
            return Err(Error::Config(
                "toy predictor needs width >= 1 and an even time_features >= 2".into(),
            ));
        }
        let c = ImageTensor::CHANNELS;
        let mut alloc = ParamAlloc::new();
        let conv_in = Conv2d::new(c, config.width, 3, &mut alloc);
        let time_proj = Dense::new(config.time_features, config.width, &mut alloc);
        let hidden = (0..config.depth)
            .map(|_| Conv2d::new(config.width, config.width, 3, &mut alloc))
            .collect();
        let conv_out = Conv2d::new(config.width, c, 3, &mut alloc);
        Ok(Self {
            config,
            conv_in,
            time_proj,
            hidden,
            conv_out,
            params: vec![0.0; alloc.total()],
        })
    }

    pub fn config(&self) -> &ToyPredictorConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(TOY_PREDICTOR_KIND, serde_json::to_string(&self.config)?);
        ck.push_tensor("params", self.params.clone());
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(TOY_PREDICTOR_KIND)?;
        Self::from_parts(serde_json::from_str(ck.meta())?, ck.tensor("params")?.to_vec())
    }

    pub fn from_parts(config: ToyPredictorConfig, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::layout(config)?;
        if params.len() != net.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    fn time_features(&self, t: usize) -> Vec<f64> {
        sinusoidal_embedding(t, self.config.time_features)
    }

    fn check_input(&self, x: &Latent) -> Result<()> {
        if x.data().len() != ImageTensor::CHANNELS * x.height() * x.width() {
            return Err(Error::dims("3-channel latent", x.data().len()));
        }
        Ok(())
    }

    fn forward_trace(&self, x: &Latent, t: usize) -> Trace {
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        let temb = self.time_features(t);
        let tbias = self.time_proj.forward(&self.params, &temb);
        let mut pre0 = self.conv_in.forward(&self.params, x.data(), h, w);
        for (c, b) in tbias.iter().enumerate() {
            for v in &mut pre0[c * hw..(c + 1) * hw] {
                *v += b;
            }
        }
        let mut acts = vec![act::silu(&pre0)];
        let mut pres = vec![pre0];
        for layer in &self.hidden {
            let a = acts.last().unwrap();
            let pre = layer.forward(&self.params, a, h, w);
            let s = act::silu(&pre);
            let next: Vec<f64> = a.iter().zip(&s).map(|(u, v)| u + v).collect();
            pres.push(pre);
            acts.push(next);
        }
        let out = self
            .conv_out
            .forward(&self.params, acts.last().unwrap(), h, w);
        Trace {
            temb,
            pres,
            acts,
            out,
        }
    }
}

struct Trace {
    temb: Vec<f64>,
    pres: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    out: Vec<f64>,
}

impl NoisePredictor for ToyPredictor {
    fn predict(&self, x: &Latent, t: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_trace(x, t).out)
    }
}

impl TrainablePredictor for ToyPredictor {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn vjp(&self, x: &Latent, t: usize, grad_out: &[f64], grad_params: &mut [f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if grad_out.len() != x.data().len() || grad_params.len() != self.params.len() {
            return Err(Error::dims("gradient buffers matching input and parameters", "mismatch"));
        }
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        let tr = self.forward_trace(x, t);
        let mut g = self
            .conv_out
            .backward(&self.params, tr.acts.last().unwrap(), h, w, grad_out, grad_params);
        for (k, layer) in self.hidden.iter().enumerate().rev() {
            // next = a + silu(pre); pre = conv(a)
            let gpre = act::silu_backward(&tr.pres[k + 1], &g);
            let ga = layer.backward(&self.params, &tr.acts[k], h, w, &gpre, grad_params);
            for (gi, gv) in g.iter_mut().zip(&ga) {
                *gi += gv;
            }
        }
        let gpre0 = act::silu_backward(&tr.pres[0], &g);
        let gtime: Vec<f64> = (0..self.config.width)
            .map(|c| gpre0[c * hw..(c + 1) * hw].iter().sum())
            .collect();
        self.time_proj
            .backward(&self.params, &tr.temb, &gtime, grad_params);
        Ok(self
            .conv_in
            .backward(&self.params, x.data(), h, w, &gpre0, grad_params))
    }
}

/// `[sin(t w_0), .., sin(t w_{k-1}), cos(t w_0), ..]` with geometrically spaced
/// frequencies `w_i = 10000^(-i / k)`.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|i| (-(10000f64.ln()) * i as f64 / half as f64).exp())
        .collect();
    let t = t as f64;
    freqs
        .iter()
        .map(|f| (t * f).sin())
        .chain(freqs.iter().map(|f| (t * f).cos()))
        .collect()
}
