//! Greedy and beam-search generation with no-repeat-n-gram blocking, plus
//! the naive, iterative and oracle inference procedures built on them.
//!
//! Search is written against two small traits so it can run over the
//! transformer or over hand-built models with known distributions:
//! [`Seq2Seq`] turns a source into a [`StepModel`], which scores the next
//! token after a generated prefix.

mod infer;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{encode, log_softmax_row, next_token_logits, EncoderOutput, ModelError, ModelParams, Scalar};
use crate::taskformat::FormatError;
use crate::tokenizer::{TokenizerError, BOS};

pub use infer::{Generation, Generator};
pub use search::{banned_tokens, beam_search, beam_search_hypothesis, greedy_decode, normalized_score, Hypothesis};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode config: {0}")]
    InvalidConfig(String),
    #[error("no token can follow the prefix at step {step}: every candidate is banned or has zero probability")]
    NoCandidates { step: usize },
    #[error("non-finite log-probability at step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_size: usize,
    /// Size of n-grams that may not repeat; 0 disables blocking.
    pub no_repeat_ngram: usize,
    /// Most tokens generated, EOS included.
    pub max_len: usize,
    /// Exponent of the length in the final ranking `log p / len^alpha`.
    pub length_alpha: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { beam_size: 3, no_repeat_ngram: 3, max_len: 128, length_alpha: 1.0 }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |m: &str| Err(DecodeError::InvalidConfig(m.to_string()));
        if self.beam_size == 0 {
            return bad("beam_size must be at least 1");
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1");
        }
        if !self.length_alpha.is_finite() || self.length_alpha < 0.0 {
            return bad("length_alpha must be finite and non-negative");
        }
        Ok(())
    }
}

/// Next-token scores for one fixed source.
pub trait StepModel {
    fn vocab_size(&self) -> usize;
    /// Log-probabilities of every token following `prefix`, the tokens
    /// generated so far (BOS excluded).
    fn log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>, DecodeError>;
}

/// A conditional model that can be primed with a source sequence.
pub trait Seq2Seq: Sync {
    fn start<'s>(&'s self, source: &[u32]) -> Result<Box<dyn StepModel + 's>, DecodeError>;
}

/// Transformer decoding against a source encoded once up front.
pub struct TransformerStep<'a, F> {
    params: &'a ModelParams<F>,
    enc: EncoderOutput<F>,
}

impl<'a, F: Scalar> TransformerStep<'a, F> {
    pub fn new(params: &'a ModelParams<F>, source: &[u32]) -> Result<Self, DecodeError> {
        Ok(Self { params, enc: encode(params, source)? })
    }
}

impl<F: Scalar> StepModel for TransformerStep<'_, F> {
    fn vocab_size(&self) -> usize {
        self.params.config.vocab_size
    }

    fn log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>, DecodeError> {
        let mut input = Vec::with_capacity(prefix.len() + 1);
        input.push(BOS);
        input.extend_from_slice(prefix);
        let logits = next_token_logits(self.params, &self.enc, &input)?;
        Ok(log_softmax_row(&logits))
    }
}

impl<F: Scalar> Seq2Seq for ModelParams<F> {
    fn start<'s>(&'s self, source: &[u32]) -> Result<Box<dyn StepModel + 's>, DecodeError> {
        Ok(Box::new(TransformerStep::new(self, source)?))
    }
}
