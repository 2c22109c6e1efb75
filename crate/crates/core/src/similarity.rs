//! Vector similarity shared by exemplar selection, retrieval and alignment scoring.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("empty vector")]
    Empty,
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine of the angle between `u` and `v`, clamped to `[-1, 1]` against rounding.
///
/// A zero vector is a domain error rather than a similarity of zero.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    if u.is_empty() {
        return Err(SimilarityError::Empty);
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Scales `v` to unit Euclidean length.
pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, SimilarityError> {
    if v.is_empty() {
        return Err(SimilarityError::Empty);
    }
    let n = norm(&v);
    if n == 0.0 || !n.is_finite() {
        return Err(SimilarityError::ZeroNorm);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}
