//! Image tensors and the value-range conventions shared by every module.
//!
//! Pixels are stored planar (channel-major, then row, then column) as `f64`.
//! Diffusion math runs on [`ValueRange::Signed`] images; encoders and file I/O
//! use [`ValueRange::Unit`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::pool;

/// Side length of images on the diffusion path.
pub const DIFFUSION_SIDE: usize = 256;
/// Side length of images fed to the age regressor.
pub const AGE_SIDE: usize = 64;

/// Slack allowed when checking that pixels respect their declared range.
pub const RANGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueRange {
    /// `[0, 1]`
    Unit,
    /// `[-1, 1]`
    Signed,
}

impl ValueRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ValueRange::Unit => (0.0, 1.0),
            ValueRange::Signed => (-1.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueRange::Unit => "[0,1]",
            ValueRange::Signed => "[-1,1]",
        }
    }

    /// Affine map taking a value in `self` to the equivalent value in `target`,
    /// as `(scale, offset)`.
    pub fn affine_to(self, target: ValueRange) -> (f64, f64) {
        match (self, target) {
            (ValueRange::Unit, ValueRange::Signed) => (2.0, -1.0),
            (ValueRange::Signed, ValueRange::Unit) => (0.5, 0.5),
            _ => (1.0, 0.0),
        }
    }
}

/// An H×W×3 image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    range: ValueRange,
    data: Vec<f64>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    /// Builds an image from planar data, checking shape, finiteness and range.
    pub fn new(height: usize, width: usize, range: ValueRange, data: Vec<f64>) -> Result<Self> {
        let img = Self::from_raw(height, width, range, data)?;
        img.check_range()?;
        Ok(img)
    }

    /// Builds an image checking shape and finiteness only. Callers must pass
    /// the result through [`validate_image`] before handing it to an operation.
    pub fn from_raw(height: usize, width: usize, range: ValueRange, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dims("positive height and width", format!("{height}x{width}")));
        }
        let expected = Self::CHANNELS * height * width;
        if data.len() != expected {
            return Err(Error::dims(
                format!("{expected} values ({height}x{width}x3)"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            height,
            width,
            range,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, range: ValueRange, value: f64) -> Result<Self> {
        Self::new(height, width, range, vec![value; Self::CHANNELS * height * width])
    }

    /// Builds an image from a per-pixel function of `(channel, row, col)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        range: ValueRange,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(Self::CHANNELS * height * width);
        for c in 0..Self::CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(height, width, range, data)
    }

    /// Clamps arbitrary finite data into `range`. Non-finite values are an error.
    pub fn clamped(height: usize, width: usize, range: ValueRange, mut data: Vec<f64>) -> Result<Self> {
        let (lo, hi) = range.bounds();
        for v in data.iter_mut() {
            *v = v.clamp(lo, hi);
        }
        Self::new(height, width, range, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Mean absolute pixel difference; both images are compared in `self`'s range.
    pub fn mean_abs_diff(&self, other: &ImageTensor) -> Result<f64> {
        ensure_same_shape(self, other)?;
        let other = other.to_range(self.range);
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.data.len() as f64)
    }

    pub fn to_range(&self, target: ValueRange) -> ImageTensor {
        convert_range(self, target)
    }

    fn check_range(&self) -> Result<()> {
        let (lo, hi) = self.range.bounds();
        for (i, &v) in self.data.iter().enumerate() {
            if v < lo - RANGE_TOLERANCE || v > hi + RANGE_TOLERANCE {
                return Err(Error::RangeViolation {
                    value: v,
                    index: i,
                    range: self.range.name(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn ensure_same_shape(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::dims(
            format!("{}x{}", a.height, a.width),
            format!("{}x{}", b.height, b.width),
        ))
    }
}

/// Checks that `img` is `expected_side`×`expected_side` and inside its declared range.
pub fn validate_image(img: ImageTensor, expected_side: usize) -> Result<ImageTensor> {
    if img.height != expected_side || img.width != expected_side {
        return Err(Error::dims(
            format!("{expected_side}x{expected_side}"),
            format!("{}x{}", img.height, img.width),
        ));
    }
    img.check_range()?;
    Ok(img)
}

/// Affine conversion between the unit and signed ranges.
pub fn convert_range(img: &ImageTensor, target: ValueRange) -> ImageTensor {
    if img.range == target {
        return img.clone();
    }
    let (scale, offset) = img.range.affine_to(target);
    let (lo, hi) = target.bounds();
    let data = img
        .data
        .iter()
        .map(|v| (v * scale + offset).clamp(lo, hi))
        .collect();
    ImageTensor {
        height: img.height,
        width: img.width,
        range: target,
        data,
    }
}

/// Resizes a square-compatible image to `side`×`side` by area averaging
/// (downscale) or pixel replication (upscale). The ratio must be an integer.
pub fn resize(img: &ImageTensor, side: usize) -> Result<ImageTensor> {
    let (h, w) = (img.height, img.width);
    if h == side && w == side {
        return Ok(img.clone());
    }
    if h != w {
        return Err(Error::dims("square image", format!("{h}x{w}")));
    }
    let data = if h > side && h % side == 0 {
        pool::avg_pool(&img.data, ImageTensor::CHANNELS, h, w, h / side)
    } else if side > h && side % h == 0 {
        pool::upsample_nearest(&img.data, ImageTensor::CHANNELS, h, w, side / h)
    } else {
        return Err(Error::InvalidArgument(format!(
            "cannot resize {h}x{w} to {side}x{side}: ratio is not an integer"
        )));
    };
    ImageTensor::new(side, side, img.range, data)
}

/// Adjoint of [`resize`]: maps a gradient on the resized image back onto the
/// source pixel grid.
pub fn resize_vjp(src_side: usize, side: usize, grad: &[f64]) -> Result<Vec<f64>> {
    if src_side == side {
        return Ok(grad.to_vec());
    }
    let c = ImageTensor::CHANNELS;
    if src_side > side && src_side % side == 0 {
        Ok(pool::avg_pool_vjp(grad, c, side, side, src_side / side))
    } else if side > src_side && side % src_side == 0 {
        Ok(pool::upsample_nearest_vjp(grad, c, src_side, src_side, side / src_side))
    } else {
        Err(Error::InvalidArgument(format!(
            "cannot resize {src_side} to {side}: ratio is not an integer"
        )))
    }
}
