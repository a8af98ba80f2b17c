//! Corpus BLEU-1/2 and Distinct-1/2.
//!
//! Text is tokenized exactly as for the model vocabulary (lowercase,
//! punctuation split off, whitespace split), without any vocabulary lookup.
//!
//! BLEU is corpus-level: clipped n-gram matches and hypothesis n-gram counts
//! are summed over all pairs before dividing, and the brevity penalty uses
//! total lengths. A zero precision `p_n` is replaced by `1 / (2 H_n)` where
//! `H_n` is the number of hypothesis n-grams; when `H_n` is zero the score is
//! zero. Distinct-n pools n-grams over all hypotheses, never across their
//! boundaries.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::normalize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{hypotheses} hypotheses but {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
    #[error("no hypotheses to score")]
    Empty,
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
}

/// Tokens the metrics operate on.
pub fn metric_tokenize(text: &str) -> Vec<String> {
    normalize(text)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

fn check_pairs<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> Result<(), MetricsError> {
    if hyps.len() != refs.len() {
        return Err(MetricsError::LengthMismatch { hypotheses: hyps.len(), references: refs.len() });
    }
    if hyps.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn bleu_tokens(hyps: &[Vec<String>], refs: &[Vec<String>], k: usize) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=k {
        let mut matches = 0usize;
        let mut total = 0usize;
        for (h, r) in hyps.iter().zip(refs) {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            for (g, c) in &hc {
                matches += (*c).min(rc.get(g).copied().unwrap_or(0));
                total += c;
            }
        }
        if total == 0 {
            return 0.0;
        }
        let p = if matches == 0 { 1.0 / (2.0 * total as f64) } else { matches as f64 / total as f64 };
        log_sum += p.ln();
    }
    let c: usize = hyps.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = (1.0 - r as f64 / c as f64).exp().min(1.0);
    bp * (log_sum / k as f64).exp()
}

/// Corpus BLEU with n-grams up to order `k`.
pub fn bleu_k<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], k: usize) -> Result<f64, MetricsError> {
    check_pairs(hyps, refs)?;
    if k == 0 {
        return Err(MetricsError::ZeroOrder);
    }
    let h: Vec<_> = hyps.iter().map(|s| metric_tokenize(s.as_ref())).collect();
    let r: Vec<_> = refs.iter().map(|s| metric_tokenize(s.as_ref())).collect();
    Ok(bleu_tokens(&h, &r, k))
}

fn distinct_tokens(hyps: &[Vec<String>], n: usize) -> f64 {
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for h in hyps {
        for g in h.windows(n) {
            seen.insert(g);
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        seen.len() as f64 / total as f64
    }
}

/// Distinct n-grams over all n-grams, pooled over every hypothesis.
pub fn distinct_n<H: AsRef<str>>(hyps: &[H], n: usize) -> Result<f64, MetricsError> {
    if hyps.is_empty() {
        return Err(MetricsError::Empty);
    }
    if n == 0 {
        return Err(MetricsError::ZeroOrder);
    }
    let h: Vec<_> = hyps.iter().map(|s| metric_tokenize(s.as_ref())).collect();
    Ok(distinct_tokens(&h, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub hypotheses: usize,
    pub reference_tokens: usize,
    pub hypothesis_tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub distinct1: f64,
    pub distinct2: f64,
    pub counts: EvalCounts,
}

impl EvalReport {
    /// Four-column table: a header row and one row of values.
    pub fn table(&self) -> String {
        format!(
            "{:>8} {:>8} {:>10} {:>10}\n{:>8.4} {:>8.4} {:>10.4} {:>10.4}\n",
            "BLEU-1", "BLEU-2", "Distinct-1", "Distinct-2", self.bleu1, self.bleu2, self.distinct1, self.distinct2
        )
    }
}

/// BLEU-1/2 against `refs` and Distinct-1/2 of `hyps`.
pub fn evaluate<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> Result<EvalReport, MetricsError> {
    check_pairs(hyps, refs)?;
    let h: Vec<_> = hyps.iter().map(|s| metric_tokenize(s.as_ref())).collect();
    let r: Vec<_> = refs.iter().map(|s| metric_tokenize(s.as_ref())).collect();
    Ok(EvalReport {
        bleu1: bleu_tokens(&h, &r, 1),
        bleu2: bleu_tokens(&h, &r, 2),
        distinct1: distinct_tokens(&h, 1),
        distinct2: distinct_tokens(&h, 2),
        counts: EvalCounts {
            hypotheses: h.len(),
            reference_tokens: r.iter().map(Vec::len).sum(),
            hypothesis_tokens: h.iter().map(Vec::len).sum(),
        },
    })
}
