//! Procedural toy data: cartoon faces, color-overlay "makeup" and an
//! intensity-to-age regression set.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::age::AgeSample;
use crate::error::Result;
use crate::image::{resize, ImageTensor, ValueRange, AGE_SIDE};
use crate::nn::seeded_rng;
use crate::pair::MakeupPair;

/// Opacity of the face-wide foundation relative to the overlay alpha.
const FOUNDATION: f64 = 0.3;

/// Geometry and coloring of one toy subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySubject {
    pub skin: [f64; 3],
    pub background: [f64; 3],
    pub face_radius: (f64, f64),
    pub eye_y: f64,
    pub eye_dx: f64,
    pub mouth_y: f64,
}

impl ToySubject {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let tone = rng.random_range(0.35..0.8);
        Self {
            skin: [tone + 0.12, tone, tone - 0.1],
            background: [
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
            ],
            face_radius: (rng.random_range(0.28..0.36), rng.random_range(0.36..0.44)),
            eye_y: rng.random_range(-0.14..-0.06),
            eye_dx: rng.random_range(0.11..0.16),
            mouth_y: rng.random_range(0.14..0.22),
        }
    }

    fn in_face(&self, u: f64, v: f64) -> f64 {
        let (rx, ry) = self.face_radius;
        soft_step(1.0 - (u * u / (rx * rx) + v * v / (ry * ry)), 0.08)
    }

    /// Soft masks over the lips, the eye lids and the cheeks on top of a
    /// light face-wide foundation layer.
    fn makeup_mask(&self, u: f64, v: f64) -> f64 {
        let lips = blob(u, v - self.mouth_y, 0.09, 0.035);
        let eyes = blob(u.abs() - self.eye_dx, v - self.eye_y + 0.03, 0.06, 0.03);
        let cheeks = blob(u.abs() - self.eye_dx - 0.02, v - 0.06, 0.06, 0.05);
        (FOUNDATION + lips + eyes + 0.6 * cheeks).min(1.0)
    }

    /// Unit-range rendering at `side`×`side`.
    pub fn render(&self, side: usize) -> Result<ImageTensor> {
        ImageTensor::from_fn(side, side, ValueRange::Unit, |c, y, x| {
            let (u, v) = centered(side, y, x);
            let face = self.in_face(u, v);
            let shade = 1.0 - 0.25 * (u * u + v * v);
            let mut val = self.background[c] * (1.0 - face) + self.skin[c] * shade * face;
            let eye = blob(u.abs() - self.eye_dx, v - self.eye_y, 0.035, 0.02);
            let mouth = blob(u, v - self.mouth_y, 0.08, 0.018);
            val *= 1.0 - 0.7 * eye - 0.35 * mouth;
            val.clamp(0.0, 1.0)
        })
    }

    /// Blends `color` into the makeup regions with opacity `alpha`.
    pub fn apply_overlay(&self, clean: &ImageTensor, color: [f64; 3], alpha: f64) -> Result<ImageTensor> {
        let side = clean.height();
        let unit = clean.to_range(ValueRange::Unit);
        let out = ImageTensor::from_fn(side, side, ValueRange::Unit, |c, y, x| {
            let (u, v) = centered(side, y, x);
            let m = alpha * self.makeup_mask(u, v) * self.in_face(u, v);
            ((1.0 - m) * unit.get(c, y, x) + m * color[c]).clamp(0.0, 1.0)
        })?;
        Ok(out.to_range(clean.range()))
    }
}

fn centered(side: usize, y: usize, x: usize) -> (f64, f64) {
    let s = side as f64;
    ((x as f64 + 0.5) / s - 0.5, (y as f64 + 0.5) / s - 0.5)
}

fn soft_step(z: f64, width: f64) -> f64 {
    0.5 + 0.5 * (z / width).tanh()
}

fn blob(du: f64, dv: f64, rx: f64, ry: f64) -> f64 {
    (-(du * du / (rx * rx) + dv * dv / (ry * ry))).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlaySpec {
    pub pairs: usize,
    /// Rendering side before nearest-neighbour upscaling.
    pub base_side: usize,
    /// Final side; a multiple of `base_side`.
    pub side: usize,
    pub color: [f64; 3],
    pub alpha: f64,
    pub seed: u64,
}

impl Default for OverlaySpec {
    fn default() -> Self {
        Self {
            pairs: 16,
            base_side: 64,
            side: 256,
            color: [0.85, 0.1, 0.3],
            alpha: 0.7,
            seed: 0,
        }
    }
}

/// Clean / made-up pairs in signed range with ages drawn from 5..65.
pub fn overlay_pairs(spec: &OverlaySpec) -> Result<Vec<MakeupPair>> {
    let mut rng = seeded_rng(spec.seed);
    (0..spec.pairs)
        .map(|i| {
            let subject = ToySubject::random(&mut rng);
            let age = rng.random_range(5.0..65.0f64).round();
            let clean = subject.render(spec.base_side)?;
            let made_up = subject.apply_overlay(&clean, spec.color, spec.alpha)?;
            let up = |img: &ImageTensor| -> Result<ImageTensor> {
                Ok(resize(img, spec.side)?.to_range(ValueRange::Signed))
            };
            MakeupPair::new(up(&clean)?, up(&made_up)?, age, format!("toy-{i:03}"))
        })
        .collect()
}

/// Mean-intensity range of the regression set.
pub const INTENSITY_RANGE: (f64, f64) = (0.15, 0.85);
pub const INTENSITY_AGE_MAX: f64 = 70.0;

pub fn intensity_to_age(mean_intensity: f64) -> f64 {
    let (lo, hi) = INTENSITY_RANGE;
    INTENSITY_AGE_MAX * (mean_intensity - lo) / (hi - lo)
}

pub fn age_to_intensity(age: f64) -> f64 {
    let (lo, hi) = INTENSITY_RANGE;
    lo + (hi - lo) * age / INTENSITY_AGE_MAX
}

/// A 64×64 image whose mean intensity encodes `age` exactly. The texture is
/// zero-mean per channel and never clips.
pub fn intensity_age_image(age: f64, rng: &mut ChaCha8Rng) -> Result<ImageTensor> {
    let base = age_to_intensity(age);
    let (fy, fx, phase) = (
        rng.random_range(1..4) as f64,
        rng.random_range(1..4) as f64,
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let amp = rng.random_range(0.02..0.12);
    let tilt = [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.0];
    ImageTensor::from_fn(AGE_SIDE, AGE_SIDE, ValueRange::Unit, |c, y, x| {
        let t = std::f64::consts::TAU / AGE_SIDE as f64;
        // full periods in both axes keep every channel mean at `base`
        let wave = (t * (fy * y as f64 + fx * x as f64) + phase + c as f64).sin();
        let t0 = tilt[c] + if c == 2 { -tilt[0] - tilt[1] } else { 0.0 };
        base + amp * wave + t0
    })
}

/// `n` samples with ages uniform in `[0, 70)`, labels from the actual pixel mean.
pub fn intensity_age_dataset(n: usize, seed: u64) -> Result<Vec<AgeSample>> {
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|_| {
            let target = rng.random_range(0.0..INTENSITY_AGE_MAX);
            let image = intensity_age_image(target, &mut rng)?;
            let age = intensity_to_age(image.mean());
            Ok(AgeSample { image, age })
        })
        .collect()
}
