//! Token-level negative log-likelihood and batch gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::model::{backward, forward, forward_tape, log_softmax_row, ModelParams, Scalar};
use crate::par;
use crate::taskformat::SeqPair;
use crate::tokenizer::{BOS, PAD};

/// Mean of `−log softmax(logits_j)[target_j]` over the non-PAD positions.
/// `logits` is `len(target) × vocab_size`, row-major.
pub fn nll_loss<F: Scalar>(logits: &[F], vocab_size: usize, target: &[u32], pad_id: u32) -> Result<f64, TrainError> {
    assert_eq!(logits.len(), target.len() * vocab_size, "logit rows must match target length");
    let (sum, n) = nll_sum(logits, vocab_size, target, pad_id);
    if n == 0 {
        return Err(TrainError::AllPadTarget);
    }
    Ok(sum / n as f64)
}

fn nll_sum<F: Scalar>(logits: &[F], vocab_size: usize, target: &[u32], pad_id: u32) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for (row, &t) in logits.chunks_exact(vocab_size).zip(target) {
        if t != pad_id {
            sum -= log_softmax_row(row)[t as usize];
            n += 1;
        }
    }
    (sum, n)
}

/// Decoder input for teacher forcing: `BOS` followed by every target token
/// but the last. Trailing PAD is dropped first: those rows carry no loss and,
/// under the causal mask, cannot reach earlier rows.
pub fn teacher_forcing(target: &[u32]) -> (Vec<u32>, &[u32]) {
    let len = target.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1);
    let target = &target[..len];
    let mut input = Vec::with_capacity(len);
    if len > 0 {
        input.push(BOS);
        input.extend_from_slice(&target[..len - 1]);
    }
    (input, target)
}

/// Pad every target to the batch maximum.
pub fn pad_batch(batch: &[SeqPair]) -> Vec<SeqPair> {
    let max = batch.iter().map(|p| p.target.len()).max().unwrap_or(0);
    batch
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q.target.resize(max, PAD);
            q
        })
        .collect()
}

fn non_pad(target: &[u32]) -> usize {
    target.iter().filter(|&&t| t != PAD).count()
}

/// Batch-mean loss evaluated by the forward pass alone.
pub fn batch_loss<F: Scalar>(params: &ModelParams<F>, batch: &[SeqPair]) -> Result<f64, TrainError> {
    let tokens: usize = batch.iter().map(|p| non_pad(&p.target)).sum();
    if batch.is_empty() || tokens == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let mut sum = 0.0;
    for (index, pair) in batch.iter().enumerate() {
        let (input, target) = teacher_forcing(&pair.target);
        if target.is_empty() {
            continue;
        }
        let logits = forward(params, &pair.source, &input).map_err(|source| TrainError::Model { index, source })?;
        sum += nll_sum(&logits, params.config.vocab_size, target, PAD).0;
    }
    Ok(sum / tokens as f64)
}

/// Gradients of the batch-mean token loss.
#[derive(Debug, Clone)]
pub struct BatchGrads<F = f32> {
    pub grads: ModelParams<F>,
    /// Batch-mean loss per target token.
    pub loss: f64,
    /// Non-PAD target tokens in the batch.
    pub tokens: usize,
}

/// Exact gradients of the batch-mean loss. Every pair is processed
/// independently (in parallel when enabled) and the per-pair gradients are
/// summed in batch order, so the result does not depend on thread count.
///
/// With `dropout_seed` set and a nonzero dropout rate, pair `i` draws its
/// masks from a generator seeded by `dropout_seed` and `i`.
pub fn compute_grads<F: Scalar>(
    params: &ModelParams<F>,
    batch: &[SeqPair],
    dropout_seed: Option<u64>,
) -> Result<BatchGrads<F>, TrainError> {
    let tokens: usize = batch.iter().map(|p| non_pad(&p.target)).sum();
    if batch.is_empty() || tokens == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let scale = 1.0 / tokens as f64;
    let v = params.config.vocab_size;
    let use_dropout = params.config.dropout > 0.0;

    let per_pair = par::map_indexed(batch, |index, pair| -> Result<Option<(f64, ModelParams<F>)>, TrainError> {
        let (input, target) = teacher_forcing(&pair.target);
        if target.is_empty() {
            return Ok(None);
        }
        let mut rng = dropout_seed
            .filter(|_| use_dropout)
            .map(|s| ChaCha8Rng::seed_from_u64(s ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let (logits, tape) = forward_tape(params, &pair.source, &input, rng.as_mut())
            .map_err(|source| TrainError::Model { index, source })?;
        let mut dlogits = vec![F::zero(); logits.len()];
        let mut sum = 0.0;
        for ((row, drow), &t) in logits.chunks_exact(v).zip(dlogits.chunks_exact_mut(v)).zip(target) {
            if t == PAD {
                continue;
            }
            let lp = log_softmax_row(row);
            sum -= lp[t as usize];
            for (c, (d, l)) in drow.iter_mut().zip(&lp).enumerate() {
                let onehot = if c == t as usize { 1.0 } else { 0.0 };
                *d = F::of((l.exp() - onehot) * scale);
            }
        }
        if !sum.is_finite() {
            return Err(TrainError::NonFiniteLoss { index, src: pair.source.clone(), target: pair.target.clone() });
        }
        let mut g = params.zeros_like();
        backward(params, &tape, &dlogits, &mut g);
        Ok(Some((sum, g)))
    });

    let mut grads = params.zeros_like();
    let mut total = 0.0;
    for r in per_pair {
        if let Some((sum, g)) = r? {
            total += sum;
            grads.add_assign(&g);
        }
    }
    Ok(BatchGrads { grads, loss: total * scale, tokens })
}
