use crate::metrics::MetricError;
use crate::scalar::Scalar;

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<T, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch { left: a.len().to_string(), right: b.len().to_string() });
    }
    if a.is_empty() {
        return Err(MetricError::EmptyVector);
    }
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return Err(MetricError::ZeroVector);
    }
    let c = dot / (na.sqrt() * nb.sqrt());
    Ok(c.max(-T::one()).min(T::one()))
}
