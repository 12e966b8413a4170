use crate::error::{Error, Result};
use crate::tensor::FlatGradient;

/// Norms below this count as zero gradients.
pub const ZERO_NORM: f64 = 1e-12;

/// Cosine of the angle between two gradients, clamped to `[-1, 1]`.
/// Returns 0 when either gradient is (numerically) zero.
pub fn cosine_similarity(g1: &FlatGradient, g2: &FlatGradient) -> Result<f64> {
    if g1.len() != g2.len() {
        return Err(Error::InvalidArgument(format!(
            "gradient lengths differ: {} vs {}",
            g1.len(),
            g2.len()
        )));
    }
    let (sq1, sq2) = (g1.dot(g1), g2.dot(g2));
    if sq1.sqrt() < ZERO_NORM || sq2.sqrt() < ZERO_NORM {
        return Ok(0.0);
    }
    // sqrt(a·a · b·b) makes cos(g, g) and cos(g, -g) come out exactly ±1
    let mut denom = (sq1 * sq2).sqrt();
    if !denom.is_finite() {
        denom = sq1.sqrt() * sq2.sqrt();
    }
    Ok((g1.dot(g2) / denom).clamp(-1.0, 1.0))
}
