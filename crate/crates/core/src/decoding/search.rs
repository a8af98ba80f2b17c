//! Greedy and beam search over a [`StepModel`].
//!
//! Beam search keeps the `beam_size` best candidates of each step by
//! cumulative log-probability. Candidates that end in EOS or reach `max_len`
//! move to the finished pool; the rest stay live. Search ends when no live
//! hypothesis remains or none can still beat the best finished one. The
//! answer is the finished hypothesis with the highest
//! `log p / len^length_alpha`, ties going to the shorter, then the
//! lexicographically smaller token sequence.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::{DecodeConfig, DecodeError, StepModel};
use crate::tokenizer::EOS;

/// A partial or complete generation. `tokens` excludes BOS and includes the
/// final EOS when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Tokens with a trailing EOS removed.
    pub fn output(&self) -> Vec<u32> {
        let mut t = self.tokens.clone();
        if t.last() == Some(&EOS) {
            t.pop();
        }
        t
    }
}

/// `log_prob / len^alpha`.
pub fn normalized_score(log_prob: f64, len: usize, alpha: f64) -> f64 {
    log_prob / (len as f64).powf(alpha)
}

/// Tokens that would complete an `n`-gram already present in `prefix`.
pub fn banned_tokens(prefix: &[u32], n: usize) -> BTreeSet<u32> {
    let mut banned = BTreeSet::new();
    if n == 0 || prefix.len() < n {
        return banned;
    }
    let key = &prefix[prefix.len() + 1 - n..];
    for gram in prefix.windows(n) {
        if &gram[..n - 1] == key {
            banned.insert(gram[n - 1]);
        }
    }
    banned
}

fn final_order(a: &Hypothesis, b: &Hypothesis, alpha: f64) -> Ordering {
    let sa = normalized_score(a.log_prob, a.tokens.len(), alpha);
    let sb = normalized_score(b.log_prob, b.tokens.len(), alpha);
    sb.total_cmp(&sa).then(a.tokens.len().cmp(&b.tokens.len())).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Finite, unbanned continuations of `prefix` with their log-probabilities.
fn continuations(model: &dyn StepModel, prefix: &[u32], n: usize) -> Result<Vec<(u32, f64)>, DecodeError> {
    let step = prefix.len();
    let lp = model.log_probs(prefix)?;
    if lp.len() != model.vocab_size() {
        return Err(DecodeError::InvalidConfig(format!(
            "model returned {} scores for a vocabulary of {}",
            lp.len(),
            model.vocab_size()
        )));
    }
    let banned = banned_tokens(prefix, n);
    let mut out = Vec::with_capacity(lp.len());
    for (v, &l) in lp.iter().enumerate() {
        if l.is_nan() || l == f64::INFINITY {
            return Err(DecodeError::NonFinite { step });
        }
        if l == f64::NEG_INFINITY || banned.contains(&(v as u32)) {
            continue;
        }
        out.push((v as u32, l));
    }
    Ok(out)
}

/// Most likely token at each step (smallest id on ties) until EOS or
/// `max_len`. The returned tokens exclude EOS.
pub fn greedy_decode(model: &dyn StepModel, cfg: &DecodeConfig) -> Result<Vec<u32>, DecodeError> {
    cfg.validate()?;
    let mut tokens = Vec::new();
    let mut score = 0.0;
    while tokens.len() < cfg.max_len {
        let mut best: Option<(u32, f64)> = None;
        for (v, l) in continuations(model, &tokens, cfg.no_repeat_ngram)? {
            let s = score + l;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((v, s));
            }
        }
        let (v, s) = best.ok_or(DecodeError::NoCandidates { step: tokens.len() })?;
        tokens.push(v);
        score = s;
        if v == EOS {
            tokens.pop();
            break;
        }
    }
    Ok(tokens)
}

/// Beam search returning the winning hypothesis itself.
pub fn beam_search_hypothesis(model: &dyn StepModel, cfg: &DecodeConfig) -> Result<Hypothesis, DecodeError> {
    cfg.validate()?;
    let alpha = cfg.length_alpha;
    // log p ≤ 0, so a live hypothesis can at best keep its score and be
    // divided by the largest length it may still reach.
    let bound_den = (cfg.max_len as f64).powf(alpha);
    let mut live = vec![Hypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut step = 0;

    while !live.is_empty() {
        if let Some(best) = finished.iter().min_by(|a, b| final_order(a, b, alpha)) {
            let target = normalized_score(best.log_prob, best.tokens.len(), alpha);
            if live.iter().all(|h| h.log_prob / bound_den < target) {
                break;
            }
        }
        let mut cands: Vec<(f64, usize, u32)> = Vec::new();
        for (parent, h) in live.iter().enumerate() {
            for (v, l) in continuations(model, &h.tokens, cfg.no_repeat_ngram)? {
                cands.push((h.log_prob + l, parent, v));
            }
        }
        if cands.is_empty() {
            break;
        }
        cands.sort_by(|a, b| {
            b.0.total_cmp(&a.0).then_with(|| live[a.1].tokens.cmp(&live[b.1].tokens)).then(a.2.cmp(&b.2))
        });
        cands.truncate(cfg.beam_size);

        let mut next = Vec::with_capacity(cands.len());
        for (log_prob, parent, v) in cands {
            let mut tokens = live[parent].tokens.clone();
            tokens.push(v);
            let done = v == EOS || tokens.len() == cfg.max_len;
            let h = Hypothesis { tokens, log_prob, finished: done };
            if done {
                finished.push(h);
            } else {
                next.push(h);
            }
        }
        live = next;
        step += 1;
    }

    finished.into_iter().min_by(|a, b| final_order(a, b, alpha)).ok_or(DecodeError::NoCandidates { step })
}

/// Beam search; the returned tokens exclude EOS.
pub fn beam_search(model: &dyn StepModel, cfg: &DecodeConfig) -> Result<Vec<u32>, DecodeError> {
    beam_search_hypothesis(model, cfg).map(|h| h.output())
}
