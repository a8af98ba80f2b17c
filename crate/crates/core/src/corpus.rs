//! Dialogue corpora, instruction triplets and instruction-labeled examples.
//!
//! All files are JSON Lines. Blank lines are skipped; every other line must be
//! one record.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("{path}:{line}: {reason}")]
    Invalid { path: String, line: usize, reason: String },
    #[error("{examples} examples but {instructions} instructions")]
    LengthMismatch { examples: usize, instructions: usize },
    #[error("empty instruction at position {0}")]
    EmptyInstruction(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    pub fn other(self) -> Self {
        match self {
            Speaker::A => Speaker::B,
            Speaker::B => Speaker::A,
        }
    }

    /// Speaker of the turn at `index` in an alternating dialogue.
    pub fn at(index: usize) -> Self {
        if index.is_multiple_of(2) {
            Speaker::A
        } else {
            Speaker::B
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

impl Turn {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Self { speaker, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    #[serde(default)]
    pub persona: Vec<String>,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Checks turn count, non-empty texts and strict A/B alternation.
    pub fn validate(&self) -> Result<(), String> {
        if self.turns.len() < 2 {
            return Err(format!("dialogue {:?} has {} turns, need at least 2", self.id, self.turns.len()));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.text.trim().is_empty() {
                return Err(format!("dialogue {:?} turn {i} is empty", self.id));
            }
            if turn.speaker != Speaker::at(i) {
                return Err(format!(
                    "dialogue {:?} turn {i}: expected speaker {:?}, found {:?}",
                    self.id,
                    Speaker::at(i),
                    turn.speaker
                ));
            }
        }
        Ok(())
    }
}

/// Conditioning side of one prediction: persona lines plus prior turns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub persona: Vec<String>,
    pub turns: Vec<Turn>,
}

/// One (context, response) pair cut from a dialogue at `turn_index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueExample {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub context: Context,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTriplet {
    pub instruction: String,
    #[serde(default)]
    pub input: String,
    pub output: String,
}

impl InstructionTriplet {
    pub fn validate(&self) -> Result<(), String> {
        if self.instruction.trim().is_empty() {
            return Err("empty instruction".into());
        }
        if self.output.trim().is_empty() {
            return Err("empty output".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub example: DialogueExample,
    pub instruction: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.display().to_string(), source }
}

/// Parse a JSONL file, handing each record and its 1-based line number to
/// `check`.
pub(crate) fn read_jsonl<T, F>(path: &Path, mut check: F) -> Result<Vec<T>, CorpusError>
where
    T: DeserializeOwned,
    F: FnMut(&T, usize) -> Result<(), String>,
{
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let rec: T = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        check(&rec, lineno).map_err(|reason| CorpusError::Invalid {
            path: path.display().to_string(),
            line: lineno,
            reason,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    for rec in records {
        serde_json::to_writer(&mut buf, rec).expect("records serialize to JSON");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

pub fn load_dialogues(path: &Path) -> Result<Vec<Dialogue>, CorpusError> {
    let mut seen = HashSet::new();
    read_jsonl(path, |d: &Dialogue, _| {
        d.validate()?;
        if !seen.insert(d.id.clone()) {
            return Err(format!("duplicate dialogue id {:?}", d.id));
        }
        Ok(())
    })
}

pub fn save_dialogues(path: &Path, dialogues: &[Dialogue]) -> Result<(), CorpusError> {
    write_jsonl(path, dialogues)
}

pub fn load_triplets(path: &Path) -> Result<Vec<InstructionTriplet>, CorpusError> {
    read_jsonl(path, |t: &InstructionTriplet, _| t.validate())
}

pub fn save_triplets(path: &Path, triplets: &[InstructionTriplet]) -> Result<(), CorpusError> {
    write_jsonl(path, triplets)
}

/// Cut every dialogue into one example per response turn `1..T`.
pub fn expand_examples(dialogues: &[Dialogue]) -> Vec<DialogueExample> {
    let mut out = Vec::with_capacity(dialogues.iter().map(|d| d.turns.len() - 1).sum());
    for d in dialogues {
        for t in 1..d.turns.len() {
            out.push(DialogueExample {
                dialogue_id: d.id.clone(),
                turn_index: t,
                context: Context { persona: d.persona.clone(), turns: d.turns[..t].to_vec() },
                response: d.turns[t].text.clone(),
            });
        }
    }
    out
}

/// Pair examples with instructions by position.
pub fn attach_instructions(
    examples: Vec<DialogueExample>,
    instructions: Vec<String>,
) -> Result<Vec<LabeledExample>, CorpusError> {
    if examples.len() != instructions.len() {
        return Err(CorpusError::LengthMismatch { examples: examples.len(), instructions: instructions.len() });
    }
    if let Some(pos) = instructions.iter().position(|s| s.trim().is_empty()) {
        return Err(CorpusError::EmptyInstruction(pos));
    }
    Ok(examples
        .into_iter()
        .zip(instructions)
        .map(|(example, instruction)| LabeledExample { example, instruction })
        .collect())
}
