use crate::error::{Error, Result};
use crate::image::{ensure_same_shape, ImageTensor};

pub const MAX_AGE_YEARS: f64 = 120.0;

/// A clean image, its made-up counterpart, and the subject's age.
#[derive(Debug, Clone)]
pub struct MakeupPair {
    clean: ImageTensor,
    made_up: ImageTensor,
    age_years: f64,
    source_id: String,
}

impl MakeupPair {
    pub fn new(
        clean: ImageTensor,
        made_up: ImageTensor,
        age_years: f64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        ensure_same_shape(&clean, &made_up)?;
        check_age(age_years)?;
        Ok(Self {
            clean,
            made_up,
            age_years,
            source_id: source_id.into(),
        })
    }

    pub fn clean(&self) -> &ImageTensor {
        &self.clean
    }

    pub fn made_up(&self) -> &ImageTensor {
        &self.made_up
    }

    pub fn age_years(&self) -> f64 {
        self.age_years
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}

pub fn check_age(age: f64) -> Result<()> {
    if age.is_finite() && (0.0..=MAX_AGE_YEARS).contains(&age) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "age {age} outside [0, {MAX_AGE_YEARS}]"
        )))
    }
}
