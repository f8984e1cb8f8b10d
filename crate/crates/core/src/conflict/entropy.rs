use super::ConflictError;
use crate::gateway::{TokenLogprobs, TokenPosition};

/// Shannon entropy (bits) of one position's candidates, renormalized over the
/// returned set. `0 · log 0` counts as 0.
pub fn position_entropy(pos: &TokenPosition) -> f64 {
    let max = pos
        .candidates
        .iter()
        .map(|c| c.logprob)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = pos.candidates.iter().map(|c| (c.logprob - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let h: f64 = weights
        .iter()
        .map(|w| w / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    h.max(0.0)
}

/// Mean per-position entropy of a generated sequence, in bits. Bounded by
/// `log2` of the largest candidate count.
pub fn mean_token_entropy(tokens: &TokenLogprobs) -> Result<f64, ConflictError> {
    if tokens.is_empty() {
        return Err(ConflictError::EmptySequence);
    }
    let sum: f64 = tokens.positions().iter().map(position_entropy).sum();
    Ok(sum / tokens.len() as f64)
}
