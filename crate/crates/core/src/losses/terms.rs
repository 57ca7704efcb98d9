use crate::age::{smoothed_l1, smoothed_l1_grad};
use crate::embedding::{cosine_with_grad, EmbeddingVector};
use crate::encoders::{DifferentiableAgePredictor, FeatureExtractor, FeatureMap, ImageEncoder, ImageTextEncoder};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

use super::objective::{LossBreakdown, LossComponents, LossWeights, PromptPair};

/// Guards the per-location channel normalization of perceptual features.
pub const FEATURE_EPS: f64 = 1e-10;

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `1 - cos(delta_i, delta_t)`; fails on a zero-length direction.
pub fn directional_loss(delta_i: &[f64], delta_t: &[f64]) -> Result<f64> {
    if delta_i.len() != delta_t.len() {
        return Err(Error::LengthMismatch {
            left: delta_i.len(),
            right: delta_t.len(),
        });
    }
    let (cos, _) = cosine_with_grad(delta_i, delta_t, "image direction")?;
    // cosine_with_grad only checks its first argument
    cosine_with_grad(delta_t, delta_i, "text direction")?;
    Ok(1.0 - cos)
}

fn text_direction(enc: &dyn ImageTextEncoder, prompts: &PromptPair) -> Result<Vec<f64>> {
    let src = enc.encode_text(&prompts.source_text)?;
    let dst = enc.encode_text(&prompts.target_text)?;
    if src.dim() != enc.dim() {
        return Err(Error::dims(enc.dim().to_string(), src.dim().to_string()));
    }
    Ok(diff(dst.values(), src.values()))
}

pub fn clip_directional_loss(
    generated: &ImageTensor,
    made_up: &ImageTensor,
    prompts: &PromptPair,
    enc: &dyn ImageTextEncoder,
) -> Result<f64> {
    let dt = text_direction(enc, prompts)?;
    let di = diff(enc.encode_image(generated)?.values(), enc.encode_image(made_up)?.values());
    directional_loss(&di, &dt)
}

pub fn clip_directional_loss_with_grad(
    generated: &ImageTensor,
    made_up: &ImageTensor,
    prompts: &PromptPair,
    enc: &dyn ImageTextEncoder,
) -> Result<(f64, Vec<f64>)> {
    let dt = text_direction(enc, prompts)?;
    let di = diff(enc.encode_image(generated)?.values(), enc.encode_image(made_up)?.values());
    let loss = directional_loss(&di, &dt)?;
    let (_, dcos) = cosine_with_grad(&di, &dt, "image direction")?;
    let g: Vec<f64> = dcos.iter().map(|v| -v).collect();
    Ok((loss, enc.encode_image_vjp(generated, &g)?))
}

/// `w1 * d(e_o, e_g) + w2 * d(e_m, e_g)` with cosine distance `d`.
pub fn identity_loss_from_embeddings(
    original: &EmbeddingVector,
    made_up: &EmbeddingVector,
    generated: &EmbeddingVector,
    w: &LossWeights,
) -> Result<f64> {
    Ok(w.lambda_1_id * (1.0 - generated.cosine(original)?) + w.lambda_2_id * (1.0 - generated.cosine(made_up)?))
}

pub fn identity_loss(
    original: &ImageTensor,
    made_up: &ImageTensor,
    generated: &ImageTensor,
    enc: &dyn ImageEncoder,
    w: &LossWeights,
) -> Result<f64> {
    identity_loss_from_embeddings(
        &enc.encode_image(original)?,
        &enc.encode_image(made_up)?,
        &enc.encode_image(generated)?,
        w,
    )
}

pub fn identity_loss_with_grad(
    original: &ImageTensor,
    made_up: &ImageTensor,
    generated: &ImageTensor,
    enc: &dyn ImageEncoder,
    w: &LossWeights,
) -> Result<(f64, Vec<f64>)> {
    let eo = enc.encode_image(original)?;
    let em = enc.encode_image(made_up)?;
    let eg = enc.encode_image(generated)?;
    let (co, go) = cosine_with_grad(eg.values(), eo.values(), "identity embedding")?;
    let (cm, gm) = cosine_with_grad(eg.values(), em.values(), "identity embedding")?;
    let loss = w.lambda_1_id * (1.0 - co) + w.lambda_2_id * (1.0 - cm);
    let g: Vec<f64> = go
        .iter()
        .zip(&gm)
        .map(|(a, b)| -w.lambda_1_id * a - w.lambda_2_id * b)
        .collect();
    Ok((loss, enc.encode_image_vjp(generated, &g)?))
}

fn check_layers(a: &[FeatureMap], b: &[FeatureMap]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Empty("feature layers"));
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    for (x, y) in a.iter().zip(b) {
        if (x.channels, x.height, x.width) != (y.channels, y.height, y.width) {
            return Err(Error::dims(
                format!("{}x{}x{}", y.channels, y.height, y.width),
                format!("{}x{}x{}", x.channels, x.height, x.width),
            ));
        }
    }
    Ok(())
}

/// Per-location channel normalization `f / (|f| + eps)` of one feature map.
fn normalize_channels(f: &FeatureMap) -> (Vec<f64>, Vec<f64>) {
    let hw = f.height * f.width;
    let mut norms = vec![0.0; hw];
    for c in 0..f.channels {
        for (n, v) in norms.iter_mut().zip(&f.data[c * hw..(c + 1) * hw]) {
            *n += v * v;
        }
    }
    norms.iter_mut().for_each(|n| *n = n.sqrt());
    let out = f
        .data
        .iter()
        .enumerate()
        .map(|(i, v)| v / (norms[i % hw] + FEATURE_EPS))
        .collect();
    (out, norms)
}

fn layer_distance(g: &FeatureMap, m: &FeatureMap) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (ng, norms) = normalize_channels(g);
    let (nm, _) = normalize_channels(m);
    let hw = (g.height * g.width) as f64;
    let d = ng.iter().zip(&nm).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / hw;
    (d, ng, nm, norms)
}

/// Mean over layers of the spatially averaged squared distance between
/// channel-normalized feature maps.
pub fn perceptual_loss(generated: &ImageTensor, made_up: &ImageTensor, fx: &dyn FeatureExtractor) -> Result<f64> {
    let fg = fx.features(generated)?;
    let fm = fx.features(made_up)?;
    check_layers(&fg, &fm)?;
    Ok(fg.iter().zip(&fm).map(|(a, b)| layer_distance(a, b).0).sum::<f64>() / fg.len() as f64)
}

pub fn perceptual_loss_with_grad(
    generated: &ImageTensor,
    made_up: &ImageTensor,
    fx: &dyn FeatureExtractor,
) -> Result<(f64, Vec<f64>)> {
    let fg = fx.features(generated)?;
    let fm = fx.features(made_up)?;
    check_layers(&fg, &fm)?;
    let layers = fg.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(fg.len());
    for (g, m) in fg.iter().zip(&fm) {
        let (d, ng, nm, norms) = layer_distance(g, m);
        loss += d / layers;
        let hw = g.height * g.width;
        let scale = 2.0 / (hw as f64 * layers);
        let gy: Vec<f64> = ng.iter().zip(&nm).map(|(a, b)| scale * (a - b)).collect();
        // y = f / (|f| + eps): g_f = g_y / (|f| + eps) - f (g_y . f) / (|f| (|f| + eps)^2)
        let mut dots = vec![0.0; hw];
        for (i, (a, f)) in gy.iter().zip(&g.data).enumerate() {
            dots[i % hw] += a * f;
        }
        let gf = gy
            .iter()
            .zip(&g.data)
            .enumerate()
            .map(|(i, (a, f))| {
                let n = norms[i % hw];
                let den = n + FEATURE_EPS;
                if n > 0.0 {
                    a / den - f * dots[i % hw] / (n * den * den)
                } else {
                    a / den
                }
            })
            .collect();
        grads.push(gf);
    }
    Ok((loss, fx.features_vjp(generated, &grads)?))
}

/// Mean absolute pixel difference, measured in `generated`'s value range.
pub fn pixel_l1_loss(generated: &ImageTensor, made_up: &ImageTensor) -> Result<f64> {
    generated.mean_abs_diff(made_up)
}

pub fn pixel_l1_loss_with_grad(generated: &ImageTensor, made_up: &ImageTensor) -> Result<(f64, Vec<f64>)> {
    let loss = generated.mean_abs_diff(made_up)?;
    let other = made_up.to_range(generated.range());
    let n = generated.len() as f64;
    let g = generated
        .data()
        .iter()
        .zip(other.data())
        .map(|(a, b)| {
            let d = a - b;
            if d == 0.0 {
                0.0
            } else {
                d.signum() / n
            }
        })
        .collect();
    Ok((loss, g))
}

/// `(1/n) sum_i L_SL(a_i, a_hat_i)` over already-predicted ages.
pub fn ssrnet_age_loss(ages_true: &[f64], ages_pred: &[f64], beta: f64) -> Result<f64> {
    if ages_true.is_empty() {
        return Err(Error::Empty("age batch"));
    }
    if ages_true.len() != ages_pred.len() {
        return Err(Error::LengthMismatch {
            left: ages_true.len(),
            right: ages_pred.len(),
        });
    }
    let mut sum = 0.0;
    for (a, p) in ages_true.iter().zip(ages_pred) {
        sum += smoothed_l1(*a, *p, beta)?;
    }
    Ok(sum / ages_true.len() as f64)
}

pub fn ssrnet_age_loss_images(
    ages_true: &[f64],
    generated: &[ImageTensor],
    predictor: &dyn DifferentiableAgePredictor,
    beta: f64,
) -> Result<f64> {
    let preds = generated
        .iter()
        .map(|g| predictor.predict_age(g))
        .collect::<Result<Vec<_>>>()?;
    ssrnet_age_loss(ages_true, &preds, beta)
}

/// Single-image term of [`ssrnet_age_loss`] and its image gradient.
pub fn ssrnet_age_loss_with_grad(
    age_true: f64,
    generated: &ImageTensor,
    predictor: &dyn DifferentiableAgePredictor,
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    let (pred, dpred) = predictor.predict_age_with_grad(generated)?;
    let loss = smoothed_l1(age_true, pred, beta)?;
    let s = smoothed_l1_grad(age_true, pred, beta)?;
    Ok((loss, dpred.into_iter().map(|g| g * s).collect()))
}

/// Prompt for the embedding-space age term, with the age rounded to whole years.
pub fn age_prompt(age_years: f64) -> String {
    format!("face of {}-year old", age_years.round() as i64)
}

pub fn clip_age_loss_from_embeddings(image: &[f64], text: &[f64]) -> Result<f64> {
    if image.len() != text.len() {
        return Err(Error::LengthMismatch {
            left: image.len(),
            right: text.len(),
        });
    }
    cosine_with_grad(text, image, "text embedding")?;
    Ok(1.0 - cosine_with_grad(image, text, "image embedding")?.0)
}

pub fn clip_age_loss(generated: &ImageTensor, age_true: f64, enc: &dyn ImageTextEncoder) -> Result<f64> {
    let t = enc.encode_text(&age_prompt(age_true))?;
    clip_age_loss_from_embeddings(enc.encode_image(generated)?.values(), t.values())
}

pub fn clip_age_loss_with_grad(
    generated: &ImageTensor,
    age_true: f64,
    enc: &dyn ImageTextEncoder,
) -> Result<(f64, Vec<f64>)> {
    let t = enc.encode_text(&age_prompt(age_true))?;
    let e = enc.encode_image(generated)?;
    let loss = clip_age_loss_from_embeddings(e.values(), t.values())?;
    let (_, dcos) = cosine_with_grad(e.values(), t.values(), "image embedding")?;
    let g: Vec<f64> = dcos.iter().map(|v| -v).collect();
    Ok((loss, enc.encode_image_vjp(generated, &g)?))
}

/// Weighted sum of the five components.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<LossBreakdown> {
    let parts = [("clip", c.clip), ("id", c.id), ("lpips", c.lpips), ("l1", c.l1), ("age", c.age)];
    if let Some((name, v)) = parts.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteLoss(format!("{name} component is {v}")));
    }
    w.validate()?;
    let total = w.lambda_clip * c.clip
        + w.lambda_id * c.id
        + w.lambda_lpips * c.lpips
        + w.lambda_l1 * c.l1
        + w.lambda_age * c.age;
    Ok(LossBreakdown {
        clip: c.clip,
        id: c.id,
        lpips: c.lpips,
        l1: c.l1,
        age: c.age,
        total,
    })
}
