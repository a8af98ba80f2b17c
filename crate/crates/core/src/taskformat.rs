//! Rendering of training and inference pairs.
//!
//! Source layouts (⧺ is concatenation, `ctx` is the persona block, `[CTX]`
//! and the speaker-marked turns):
//!
//! | case | source                                   | target            |
//! |------|------------------------------------------|-------------------|
//! | 1    | `<gen_inst>` ctx `[RSP]` response        | instruction `</s>`|
//! | 2    | `<gen_resp>` `[INS]` instruction ctx     | response `</s>`   |
//! | 3    | `<gen_inst>` ctx                         | instruction `</s>`|
//! | 4    | `<gen_resp>` ctx                         | response `</s>`   |
//!
//! Instruction-generator pairs are `<mask_0> [CTX] x [RSP] y` with target
//! `<mask_0> instruction </s>`.
//!
//! When a source is over budget the oldest context turns go first, whole.
//! If the single remaining turn is still too long its leading text tokens are
//! cut (its speaker marker stays). Sentinels, the instruction and response
//! blocks and the persona block are only cut when no context is left.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Context, DialogueExample, LabeledExample, Speaker};
use crate::tokenizer::{self as tok, Vocabulary};

/// Default source budget.
pub const DEFAULT_MAX_SRC_LEN: usize = 512;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("source needs {needed} fixed tokens but the budget is {budget}")]
    Overflow { needed: usize, budget: usize },
    #[error("{0:?} requires an instruction")]
    MissingInstruction(TaskCase),
    #[error("{0:?} requires a response")]
    MissingResponse(TaskCase),
    #[error("instruction-generator output must be non-empty")]
    EmptyOutput,
}

/// The four conditional formulations of multi-task training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskCase {
    /// instruction | context, response
    InstrFromContextAndResponse,
    /// response | instruction, context
    RespFromInstructionAndContext,
    /// instruction | context
    InstrFromContext,
    /// response | context
    RespFromContext,
}

impl TaskCase {
    pub const ALL: [TaskCase; 4] = [
        TaskCase::InstrFromContextAndResponse,
        TaskCase::RespFromInstructionAndContext,
        TaskCase::InstrFromContext,
        TaskCase::RespFromContext,
    ];

    /// Position in [`TaskCase::ALL`] (case number minus one).
    pub fn index(self) -> usize {
        match self {
            TaskCase::InstrFromContextAndResponse => 0,
            TaskCase::RespFromInstructionAndContext => 1,
            TaskCase::InstrFromContext => 2,
            TaskCase::RespFromContext => 3,
        }
    }

    pub fn predicts_instruction(self) -> bool {
        matches!(self, TaskCase::InstrFromContextAndResponse | TaskCase::InstrFromContext)
    }

    fn sentinel(self) -> u32 {
        if self.predicts_instruction() {
            tok::GEN_INST
        } else {
            tok::GEN_RESP
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairKind {
    Case(TaskCase),
    InstGen,
    /// Instruction-generator source with no target.
    InstGenInference,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqPair {
    pub source: Vec<u32>,
    pub target: Vec<u32>,
    pub kind: PairKind,
}

/// How training draws a case for each example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    /// Uniform over the four cases.
    Full,
    /// Always [`TaskCase::RespFromContext`]; the no-instruction ablation.
    ResponseOnly,
}

/// Draw the case for one example.
pub fn sample_case<R: Rng + ?Sized>(rng: &mut R, mode: TrainingMode) -> TaskCase {
    match mode {
        TrainingMode::Full => TaskCase::ALL[rng.random_range(0..4)],
        TrainingMode::ResponseOnly => TaskCase::RespFromContext,
    }
}

fn speaker_marker(s: Speaker) -> (&'static str, u32) {
    match s {
        Speaker::A => ("[SPKA]", tok::SPK_A),
        Speaker::B => ("[SPKB]", tok::SPK_B),
    }
}

/// Human-readable context layout: `[PER] p1 [SEP] p2 [CTX] [SPKA] t0 [SPKB] t1 ...`.
pub fn serialize_context(context: &Context) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for (i, p) in context.persona.iter().enumerate() {
        parts.push(if i == 0 { "[PER]" } else { "[SEP]" });
        parts.push(p);
    }
    parts.push("[CTX]");
    for t in &context.turns {
        parts.push(speaker_marker(t.speaker).0);
        parts.push(&t.text);
    }
    parts.join(" ")
}

fn persona_tokens(context: &Context, vocab: &Vocabulary) -> Vec<u32> {
    let mut out = Vec::new();
    for (i, p) in context.persona.iter().enumerate() {
        out.push(if i == 0 { tok::PER } else { tok::SEP });
        out.extend(vocab.encode(p));
    }
    out
}

/// Fit the newest turns into `budget` tokens.
fn fit_turns(context: &Context, vocab: &Vocabulary, budget: usize) -> Vec<u32> {
    let turns: Vec<Vec<u32>> = context
        .turns
        .iter()
        .map(|t| {
            let mut v = vec![speaker_marker(t.speaker).1];
            v.extend(vocab.encode(&t.text));
            v
        })
        .collect();
    let mut start = 0;
    let mut total: usize = turns.iter().map(Vec::len).sum();
    while total > budget && turns.len() - start > 1 {
        total -= turns[start].len();
        start += 1;
    }
    let mut out = Vec::with_capacity(total.min(budget));
    if total > budget {
        // one turn left and it is still too long
        if budget > 0 {
            let turn = &turns[start];
            out.push(turn[0]);
            out.extend_from_slice(&turn[turn.len() - (budget - 1)..]);
        }
        return out;
    }
    for t in &turns[start..] {
        out.extend_from_slice(t);
    }
    out
}

/// Assemble `head ⧺ persona ⧺ [CTX] ⧺ turns ⧺ tail` within `max_src_len`.
fn assemble(
    head: &[u32],
    context: &Context,
    tail: &[u32],
    vocab: &Vocabulary,
    max_src_len: usize,
) -> Result<Vec<u32>, FormatError> {
    let fixed = head.len() + 1 + tail.len();
    if fixed > max_src_len {
        return Err(FormatError::Overflow { needed: fixed, budget: max_src_len });
    }
    let mut persona = persona_tokens(context, vocab);
    persona.truncate(max_src_len - fixed);
    let turns = fit_turns(context, vocab, max_src_len - fixed - persona.len());

    let mut src = Vec::with_capacity(fixed + persona.len() + turns.len());
    src.extend_from_slice(head);
    src.extend_from_slice(&persona);
    src.push(tok::CTX);
    src.extend_from_slice(&turns);
    src.extend_from_slice(tail);
    Ok(src)
}

/// Source tokens for `case`. Case 1 needs `response`, case 2 needs
/// `instruction`; the other argument is ignored.
pub fn case_source(
    case: TaskCase,
    context: &Context,
    instruction: Option<&str>,
    response: Option<&str>,
    vocab: &Vocabulary,
    max_src_len: usize,
) -> Result<Vec<u32>, FormatError> {
    let mut head = vec![case.sentinel()];
    let mut tail = Vec::new();
    match case {
        TaskCase::InstrFromContextAndResponse => {
            let r = response.ok_or(FormatError::MissingResponse(case))?;
            tail.push(tok::RSP);
            tail.extend(vocab.encode(r));
        }
        TaskCase::RespFromInstructionAndContext => {
            let i = instruction.ok_or(FormatError::MissingInstruction(case))?;
            head.push(tok::INS);
            head.extend(vocab.encode(i));
        }
        TaskCase::InstrFromContext | TaskCase::RespFromContext => {}
    }
    assemble(&head, context, &tail, vocab, max_src_len)
}

fn with_eos(mut ids: Vec<u32>) -> Vec<u32> {
    ids.push(tok::EOS);
    ids
}

/// Training pair for one labeled example under `case`.
pub fn format_case(
    ex: &LabeledExample,
    case: TaskCase,
    vocab: &Vocabulary,
    max_src_len: usize,
) -> Result<SeqPair, FormatError> {
    let e = &ex.example;
    let source = case_source(case, &e.context, Some(&ex.instruction), Some(&e.response), vocab, max_src_len)?;
    let target = if case.predicts_instruction() {
        with_eos(vocab.encode(&ex.instruction))
    } else {
        with_eos(vocab.encode(&e.response))
    };
    Ok(SeqPair { source, target, kind: PairKind::Case(case) })
}

/// Case-4 pair for an example without an instruction.
pub fn format_response_only(
    ex: &DialogueExample,
    vocab: &Vocabulary,
    max_src_len: usize,
) -> Result<SeqPair, FormatError> {
    let case = TaskCase::RespFromContext;
    Ok(SeqPair {
        source: case_source(case, &ex.context, None, None, vocab, max_src_len)?,
        target: with_eos(vocab.encode(&ex.response)),
        kind: PairKind::Case(case),
    })
}

/// Fill-in-the-blank pair for the instruction generator. With no instruction
/// the pair is an inference query and its target is empty. `x` may carry
/// marker literals (a serialized context); they map to marker ids.
pub fn format_instgen(
    x: &str,
    y: &str,
    instruction: Option<&str>,
    vocab: &Vocabulary,
    max_src_len: usize,
) -> Result<SeqPair, FormatError> {
    if y.trim().is_empty() {
        return Err(FormatError::EmptyOutput);
    }
    let y_ids = vocab.encode_marked(y);
    let fixed = 3 + y_ids.len();
    if fixed > max_src_len {
        return Err(FormatError::Overflow { needed: fixed, budget: max_src_len });
    }
    let x_ids = vocab.encode_marked(x);
    let keep = x_ids.len().min(max_src_len - fixed);
    let mut source = vec![tok::MASK_0, tok::CTX];
    source.extend_from_slice(&x_ids[x_ids.len() - keep..]);
    source.push(tok::RSP);
    source.extend(y_ids);

    let (target, kind) = match instruction {
        Some(i) => {
            let mut t = vec![tok::MASK_0];
            t.extend(vocab.encode(i));
            (with_eos(t), PairKind::InstGen)
        }
        None => (Vec::new(), PairKind::InstGenInference),
    };
    Ok(SeqPair { source, target, kind })
}
