//! Helpers shared by the integration tests and the acceptance suite.

#![allow(dead_code)]

pub mod golden;

use cidg_core::decoding::{DecodeConfig, DecodeError, StepModel};
use cidg_core::model::{init_model, ModelConfig, ModelParams, ParamKind};
use cidg_core::tokenizer::EOS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded random transformer with weights scaled up so its next-token
/// distributions are far from uniform.
pub fn random_model(vocab_size: usize, max_positions: usize, seed: u64, gain: f32) -> ModelParams<f32> {
    let config = ModelConfig {
        vocab_size,
        d_model: 16,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        d_ff: 32,
        max_positions,
        dropout: 0.0,
    };
    let mut p = init_model(config, seed).unwrap();
    let layout = p.layout.clone();
    for (spec, t) in layout.specs.iter().zip(p.tensors.iter_mut()) {
        if matches!(spec.kind, ParamKind::Weight | ParamKind::Embedding) {
            t.iter_mut().for_each(|x| *x *= gain);
        }
    }
    p
}

/// Random source of `len` non-PAD tokens.
pub fn random_source(vocab_size: usize, len: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(1..vocab_size as u32)).collect()
}

/// Whether some `n`-gram occurs twice in `tokens`.
pub fn has_repeated_ngram(tokens: &[u32], n: usize) -> bool {
    if n == 0 || tokens.len() < n {
        return false;
    }
    let grams: Vec<&[u32]> = tokens.windows(n).collect();
    (0..grams.len()).any(|i| (i + 1..grams.len()).any(|j| grams[i] == grams[j]))
}

/// Exhaustive search over every sequence the decoder could emit: all
/// token strings ending in EOS or reaching `max_len`, with no repeated
/// `no_repeat_ngram`-gram and no zero-probability token. Returns the best
/// by `log p / len^alpha`, then shorter, then lexicographically smaller,
/// as (tokens including EOS, log p).
pub fn enumerate_best(model: &dyn StepModel, cfg: &DecodeConfig) -> Option<(Vec<u32>, f64)> {
    fn better(a: &(Vec<u32>, f64), b: &(Vec<u32>, f64), alpha: f64) -> bool {
        let sa = a.1 / (a.0.len() as f64).powf(alpha);
        let sb = b.1 / (b.0.len() as f64).powf(alpha);
        if sa != sb {
            return sa > sb;
        }
        if a.0.len() != b.0.len() {
            return a.0.len() < b.0.len();
        }
        a.0 < b.0
    }

    fn walk(
        model: &dyn StepModel,
        cfg: &DecodeConfig,
        prefix: &mut Vec<u32>,
        score: f64,
        best: &mut Option<(Vec<u32>, f64)>,
    ) {
        let lp = model.log_probs(prefix).unwrap();
        for (v, &l) in lp.iter().enumerate() {
            if l == f64::NEG_INFINITY {
                continue;
            }
            prefix.push(v as u32);
            if !has_repeated_ngram(prefix, cfg.no_repeat_ngram) {
                let s = score + l;
                if v as u32 == EOS || prefix.len() == cfg.max_len {
                    let cand = (prefix.clone(), s);
                    if best.as_ref().is_none_or(|b| better(&cand, b, cfg.length_alpha)) {
                        *best = Some(cand);
                    }
                } else {
                    walk(model, cfg, prefix, s, best);
                }
            }
            prefix.pop();
        }
    }

    let mut best = None;
    walk(model, cfg, &mut Vec::new(), 0.0, &mut best);
    best
}

/// Pushes EOS down so outputs run long and blocking has work to do.
pub struct EosPenalty<'a>(pub &'a dyn StepModel, pub f64);

impl StepModel for EosPenalty<'_> {
    fn vocab_size(&self) -> usize {
        self.0.vocab_size()
    }
    fn log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>, DecodeError> {
        let mut lp = self.0.log_probs(prefix)?;
        lp[EOS as usize] -= self.1;
        let z = lp.iter().map(|x| x.exp()).sum::<f64>().ln();
        Ok(lp.iter().map(|x| x - z).collect())
    }
}
