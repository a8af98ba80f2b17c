//! Small encoder-decoder transformer with tied input/output embeddings.
//!
//! Storage is `f32`; everything is generic over [`Scalar`] so the same code
//! runs in `f64` for gradient verification.

mod linalg;
mod net;
mod params;

use thiserror::Error;

pub use linalg::{log_softmax_row, Scalar};
pub use net::{backward, encode, forward, forward_tape, next_token_logits, EncoderOutput, Tape};
pub use params::{
    count_params, init_model, AttnIdx, DecLayerIdx, EncLayerIdx, FfnIdx, Layout, ModelConfig, ModelParams, NormIdx,
    ParamKind, TensorSpec,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence length {len} exceeds max_positions {max}")]
    PositionOverflow { len: usize, max: usize },
    #[error("PAD may only appear as a trailing run in the source")]
    InteriorPad,
    #[error("source has no tokens before padding")]
    EmptySource,
    #[error("decoder input must start with BOS")]
    MissingBos,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{BOS, PAD};
    use proptest::prelude::*;

    fn small(vocab: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            d_model: 16,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_ff: 32,
            max_positions: 32,
            dropout: 0.0,
        }
    }

    /// Scale weights up so the functions under test are far from trivial.
    fn lively(seed: u64) -> ModelParams<f32> {
        let mut p = init_model(small(24), seed).unwrap();
        let layout = p.layout.clone();
        for (spec, t) in layout.specs.iter().zip(p.tensors.iter_mut()) {
            if matches!(spec.kind, ParamKind::Weight | ParamKind::Embedding) {
                t.iter_mut().for_each(|x| *x *= 25.0);
            }
        }
        p
    }

    #[test]
    fn shape_of_single_step() {
        let p = lively(0);
        let logits = forward(&p, &[5, 6, 7], &[BOS]).unwrap();
        assert_eq!(logits.len(), 24);
    }

    #[test]
    fn input_errors() {
        let p = lively(0);
        assert_eq!(forward(&p, &[5, 99], &[BOS]), Err(ModelError::IdOutOfRange { id: 99, vocab_size: 24 }));
        assert_eq!(forward(&p, &[5, PAD, 6], &[BOS]), Err(ModelError::InteriorPad));
        assert_eq!(forward(&p, &[PAD], &[BOS]), Err(ModelError::EmptySource));
        assert_eq!(forward(&p, &[5], &[7]), Err(ModelError::MissingBos));
        let long = vec![5u32; 33];
        assert!(matches!(forward(&p, &long, &[BOS]), Err(ModelError::PositionOverflow { .. })));
        assert!(matches!(forward(&p, &[5], &long), Err(ModelError::MissingBos)));
    }

    #[test]
    fn tied_head_couples_input_and_output() {
        let p = lively(3);
        let src = [5u32, 9, 11];
        let tgt = [BOS, 9, 14];
        let base = forward(&p, &src, &tgt).unwrap();
        let mut q = p.clone();
        let emb = q.layout.tok_emb;
        let d = q.config.d_model;
        // a constant shift would be invisible: normalized rows sum to zero
        for (c, x) in q.tensors[emb][14 * d..15 * d].iter_mut().enumerate() {
            *x += 0.1 * c as f32;
        }
        let out = forward(&q, &src, &tgt).unwrap();
        let v = 24;
        // token 14 is only an input at the last decoder position, so rows 0,1
        // change only in logit column 14
        for r in 0..2 {
            for c in 0..v {
                let changed = base[r * v + c] != out[r * v + c];
                assert_eq!(changed, c == 14, "row {r} col {c}");
            }
        }
        assert_ne!(base[2 * v + 3], out[2 * v + 3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn causal_rows_are_bit_identical(
            seed in 0u64..1000,
            src in proptest::collection::vec(4u32..24, 1..10),
            tgt in proptest::collection::vec(4u32..24, 1..10),
            k_frac in 0.0f64..1.0,
            replacement in 4u32..24,
        ) {
            let p = lively(seed);
            let mut tin = vec![BOS];
            tin.extend(&tgt);
            let k = 1 + ((tgt.len() as f64 * k_frac) as usize).min(tgt.len() - 1);
            let a = forward(&p, &src, &tin).unwrap();
            let mut tin2 = tin.clone();
            tin2[k] = replacement;
            let b = forward(&p, &src, &tin2).unwrap();
            prop_assert_eq!(&a[..k * 24], &b[..k * 24]);
        }

        #[test]
        fn trailing_pad_is_invisible(
            seed in 0u64..1000,
            src in proptest::collection::vec(4u32..24, 1..10),
            tgt in proptest::collection::vec(4u32..24, 0..8),
            pads in 1usize..6,
        ) {
            let p = lively(seed);
            let mut tin = vec![BOS];
            tin.extend(&tgt);
            let a = forward(&p, &src, &tin).unwrap();
            let mut padded = src.clone();
            padded.extend(std::iter::repeat_n(PAD, pads));
            let b = forward(&p, &padded, &tin).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn rows_normalize_and_repeat(
            seed in 0u64..1000,
            src in proptest::collection::vec(4u32..24, 1..8),
            tgt in proptest::collection::vec(4u32..24, 0..8),
        ) {
            let p = lively(seed);
            let mut tin = vec![BOS];
            tin.extend(&tgt);
            let a = forward(&p, &src, &tin).unwrap();
            prop_assert_eq!(&a, &forward(&p, &src, &tin).unwrap());
            for row in a.chunks(24) {
                prop_assert!(row.iter().all(|x| x.is_finite()));
                let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let s: f32 = row.iter().map(|x| (x - m).exp()).sum();
                let probs: f32 = row.iter().map(|x| (x - m).exp() / s).sum();
                prop_assert!((probs - 1.0).abs() < 1e-5);
            }
        }

        #[test]
        fn incremental_step_matches_full_forward(
            seed in 0u64..1000,
            src in proptest::collection::vec(4u32..24, 1..8),
            tgt in proptest::collection::vec(4u32..24, 0..8),
        ) {
            let p = lively(seed);
            let mut tin = vec![BOS];
            tin.extend(&tgt);
            let full = forward(&p, &src, &tin).unwrap();
            let enc = encode(&p, &src).unwrap();
            let last = next_token_logits(&p, &enc, &tin).unwrap();
            let row = &full[(tin.len() - 1) * 24..];
            for (a, b) in row.iter().zip(&last) {
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
            }
        }
    }
}
