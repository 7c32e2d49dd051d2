use crate::autodiff::{Tape, TapeTensor};
use crate::error::{Error, Result};
use crate::graph::Csr;
use rand::Rng;
use std::sync::Arc;

/// `Σ (p⁺ − 1)² + Σ (p⁻)²` over positive and negative link probabilities.
pub fn reconstruction_loss(tape: &mut Tape, positive: TapeTensor, negative: TapeTensor) -> Result<TapeTensor> {
    let shifted = tape.add_scalar(positive, -1.0);
    let pos_sq = tape.hadamard(shifted, shifted)?;
    let neg_sq = tape.hadamard(negative, negative)?;
    let a = tape.sum_all(pos_sq);
    let b = tape.sum_all(neg_sq);
    tape.add(a, b)
}

/// Mean negative log-probability of the true class over `(row, class)`
/// targets, given row-wise log-probabilities.
pub fn classification_loss(tape: &mut Tape, log_probs: TapeTensor, targets: &[(usize, usize)]) -> Result<TapeTensor> {
    if targets.is_empty() {
        return Err(Error::Contract("classification loss needs at least one target".into()));
    }
    let picked = tape.pick(log_probs, Arc::from(targets))?;
    let mean = tape.mean_all(picked);
    Ok(tape.neg(mean))
}

/// `(1 − λ)·rec + λ·cls`.
pub fn total_loss(tape: &mut Tape, rec: TapeTensor, cls: TapeTensor, lambda: f64) -> Result<TapeTensor> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::config("lambda", format!("{lambda} outside (0, 1]")));
    }
    let a = tape.scale(rec, 1.0 - lambda);
    let b = tape.scale(cls, lambda);
    tape.add(a, b)
}

/// For each positive `(u, v)` draws one non-neighbor `m ≠ v` of `v` and
/// returns `(v, m)`.
pub fn sample_negatives<R: Rng + ?Sized>(
    adj: &Csr,
    positives: &[(usize, usize)],
    retries: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let n = adj.num_nodes();
    positives
        .iter()
        .map(|&(_, v)| {
            for _ in 0..retries.max(1) {
                let m = rng.random_range(0..n);
                if m != v && !adj.has_edge(v, m) {
                    return Ok((v, m));
                }
            }
            Err(Error::Sampling(format!(
                "no non-neighbor of node {v} found in {retries} draws"
            )))
        })
        .collect()
}
