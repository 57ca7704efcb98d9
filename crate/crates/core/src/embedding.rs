use crate::error::{Error, Result};

/// Norm below which a vector is treated as having no direction.
pub const MIN_NORM: f64 = 1e-12;

/// A unit-norm feature vector produced by an encoder backend.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// L2-normalizes `values`. Fails on empty, non-finite or zero-norm input.
    pub fn normalize(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("embedding"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let norm = l2_norm(&values);
        if norm < MIN_NORM {
            return Err(Error::DegenerateDirection("embedding"));
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::LengthMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(dot(&self.0, &other.0))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity of two arbitrary vectors and its gradient with respect to
/// the first argument.
pub fn cosine_with_grad(a: &[f64], b: &[f64], what: &'static str) -> Result<(f64, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na < MIN_NORM || nb < MIN_NORM {
        return Err(Error::DegenerateDirection(what));
    }
    let cos = dot(a, b) / (na * nb);
    let grad = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| bi / (na * nb) - cos * ai / (na * na))
        .collect();
    Ok((cos, grad))
}

/// Backpropagates through `y = v / |v|`: given dL/dy returns dL/dv.
pub fn normalize_vjp(v: &[f64], grad_y: &[f64]) -> Vec<f64> {
    let n = l2_norm(v);
    let y_dot_g: f64 = v.iter().zip(grad_y).map(|(a, g)| a * g).sum::<f64>() / n;
    v.iter()
        .zip(grad_y)
        .map(|(&vi, &gi)| (gi - (vi / n) * y_dot_g) / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_has_unit_norm() {
        let e = EmbeddingVector::normalize(vec![3.0, 4.0, 12.0]).unwrap();
        assert!((l2_norm(e.values()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(
            EmbeddingVector::normalize(vec![0.0; 4]),
            Err(Error::DegenerateDirection(_))
        ));
        assert!(EmbeddingVector::normalize(vec![]).is_err());
    }

    #[test]
    fn cosine_grad_matches_finite_difference() {
        let a = vec![0.3, -1.2, 0.8];
        let b = vec![1.0, 0.5, -0.25];
        let (_, g) = cosine_with_grad(&a, &b, "t").unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut ap = a.clone();
            ap[i] += h;
            let mut am = a.clone();
            am[i] -= h;
            let fd = (cosine_with_grad(&ap, &b, "t").unwrap().0
                - cosine_with_grad(&am, &b, "t").unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
