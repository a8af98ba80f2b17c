//! The end-to-end commands: train the instruction generator, label a
//! dialogue corpus, train the dialogue model, generate under one of five
//! instruction modes, evaluate, and chat.
//!
//! Every command takes a [`RunConfig`]. Relative paths in it resolve against
//! `data_dir`, which defaults to `$CIDG_DATA_DIR` and then to the working
//! directory.

mod chat;
mod commands;
mod records;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Dialogue, InstructionTriplet};
use crate::decoding::{DecodeConfig, DecodeError};
use crate::metrics::MetricsError;
use crate::model::{ModelConfig, ModelError};
use crate::taskformat::{FormatError, DEFAULT_MAX_SRC_LEN};
use crate::tokenizer::{build_vocab, TokenizerError, Vocabulary, RESERVED};
use crate::training::{TrainConfig, TrainError};

pub use chat::{chat, ChatSession};
pub use commands::{
    cmd_eval, cmd_generate, cmd_label, cmd_train_dialog, cmd_train_instgen, generate_one, LabelSummary,
};
pub use records::{
    load_generations, load_history, load_labeled, load_report, save_generations, save_labeled, save_report,
    GenerationRecord, History, LabeledRecord,
};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "CIDG_DATA_DIR";

/// Instruction used when the generator decodes nothing for an example.
pub const FALLBACK_INSTRUCTION: &str = "respond to the dialogue";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{what} not found at {path} (set `{key}` in the config or point {DATA_DIR_ENV} at the data directory)")]
    Missing { what: &'static str, key: &'static str, path: String },
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: no example for dialogue {dialogue_id:?} turn {turn_index}")]
    Unmatched { path: String, dialogue_id: String, turn_index: usize },
    #[error("{path}: dialogue {dialogue_id:?} turn {turn_index} appears twice")]
    Duplicate { path: String, dialogue_id: String, turn_index: usize },
    #[error("dialogue {dialogue_id:?} turn {turn_index}: {source}")]
    Example {
        dialogue_id: String,
        turn_index: usize,
        #[source]
        source: DecodeError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Where instructions come from at generation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionMode {
    /// No instruction; response from the context alone. Training uses only
    /// response-from-context pairs.
    None,
    /// A small fixed instruction set assigned round-robin.
    Fixed,
    /// Instruction and response decoded independently.
    #[serde(alias = "generated-naive")]
    GeneratedNaive,
    /// Instruction decoded first, then the response under it.
    #[serde(alias = "generated-iterative")]
    GeneratedIterative,
    /// Instruction decoded with the gold response visible, then the
    /// response under it.
    Oracle,
}

impl InstructionMode {
    pub const ALL: [InstructionMode; 5] = [
        InstructionMode::None,
        InstructionMode::Fixed,
        InstructionMode::GeneratedNaive,
        InstructionMode::GeneratedIterative,
        InstructionMode::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstructionMode::None => "none",
            InstructionMode::Fixed => "fixed",
            InstructionMode::GeneratedNaive => "generated-naive",
            InstructionMode::GeneratedIterative => "generated-iterative",
            InstructionMode::Oracle => "oracle",
        }
    }

    /// One-line description for reports.
    pub fn describe(self) -> &'static str {
        match self {
            InstructionMode::None => "no instructions",
            InstructionMode::Fixed => "fixed instruction set (a stand-in for a human-written instruction bank)",
            InstructionMode::GeneratedNaive => "generated instructions, decoded independently of the response",
            InstructionMode::GeneratedIterative => "generated instructions, response conditioned on them",
            InstructionMode::Oracle => "instructions generated from the gold response (upper bound)",
        }
    }
}

/// Everything a pipeline run needs, as one flat TOML table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root for relative paths; `$CIDG_DATA_DIR` or `.` when unset.
    pub data_dir: Option<PathBuf>,
    pub dialogues: PathBuf,
    pub test_dialogues: PathBuf,
    pub triplets: PathBuf,
    pub labeled: PathBuf,
    pub instgen_checkpoint: PathBuf,
    pub dialog_checkpoint: PathBuf,
    pub generations: PathBuf,
    pub report: PathBuf,

    pub instruction_mode: InstructionMode,
    pub fixed_instruction_set: Vec<String>,
    pub seed: u64,

    pub vocab_min_freq: usize,
    pub vocab_max_size: usize,

    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub dropout: f64,

    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub adam_eps: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub grad_clip_norm: f64,
    pub max_src_len: usize,

    pub beam_size: usize,
    pub no_repeat_ngram: usize,
    pub max_len: usize,
    pub length_alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::desk(0);
        let t = TrainConfig::default();
        let d = DecodeConfig::default();
        Self {
            data_dir: None,
            dialogues: "dialogues.jsonl".into(),
            test_dialogues: "test_dialogues.jsonl".into(),
            triplets: "triplets.jsonl".into(),
            labeled: "labeled.jsonl".into(),
            instgen_checkpoint: "instgen.ckpt".into(),
            dialog_checkpoint: "dialog.ckpt".into(),
            generations: "generations.jsonl".into(),
            report: "report.json".into(),
            instruction_mode: InstructionMode::GeneratedIterative,
            fixed_instruction_set: vec![
                "given a context, generate the next response".into(),
                "continue the conversation with a relevant reply".into(),
                "respond to the last utterance of the dialogue".into(),
                "write a natural next turn for this conversation".into(),
            ],
            seed: 0,
            vocab_min_freq: 1,
            vocab_max_size: 2048,
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_enc_layers: m.n_enc_layers,
            n_dec_layers: m.n_dec_layers,
            d_ff: m.d_ff,
            max_positions: m.max_positions,
            dropout: m.dropout,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            warmup_ratio: t.warmup_ratio,
            weight_decay: t.weight_decay,
            adam_eps: t.adam_eps,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            grad_clip_norm: t.grad_clip_norm,
            max_src_len: DEFAULT_MAX_SRC_LEN,
            beam_size: d.beam_size,
            no_repeat_ngram: d.no_repeat_ngram,
            max_len: d.max_len,
            length_alpha: d.length_alpha,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
        toml::from_str(&text)
            .map_err(|e| PipelineError::Parse { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.instruction_mode == InstructionMode::Fixed {
            let n = self.fixed_instruction_set.len();
            if !(3..=5).contains(&n) {
                return bad(format!("fixed mode needs 3 to 5 fixed instructions, got {n}"));
            }
            if self.fixed_instruction_set.iter().any(|s| s.trim().is_empty()) {
                return bad("fixed instructions must be non-empty".into());
            }
        }
        if self.max_positions < self.max_src_len || self.max_positions < self.max_len {
            return bad(format!(
                "max_positions {} must cover max_src_len {} and max_len {}",
                self.max_positions, self.max_src_len, self.max_len
            ));
        }
        if self.max_src_len < 16 {
            return bad("max_src_len must be at least 16".into());
        }
        self.train_config().validate()?;
        self.decode_config().validate()?;
        self.model_config(RESERVED.len()).validate()?;
        Ok(())
    }

    /// Directory relative paths resolve against.
    pub fn data_root(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_root().join(p)
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_enc_layers: self.n_enc_layers,
            n_dec_layers: self.n_dec_layers,
            d_ff: self.d_ff,
            max_positions: self.max_positions,
            dropout: self.dropout,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            warmup_ratio: self.warmup_ratio,
            weight_decay: self.weight_decay,
            adam_eps: self.adam_eps,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            grad_clip_norm: self.grad_clip_norm,
            max_src_len: self.max_src_len,
            seed: self.seed,
        }
    }

    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            beam_size: self.beam_size,
            no_repeat_ngram: self.no_repeat_ngram,
            max_len: self.max_len,
            length_alpha: self.length_alpha,
        }
    }

    /// Resolve `p` and fail with an actionable message when it is missing.
    fn existing(&self, p: &Path, what: &'static str, key: &'static str) -> Result<PathBuf, PipelineError> {
        let path = self.resolve(p);
        if path.exists() {
            Ok(path)
        } else {
            Err(PipelineError::Missing { what, key, path: path.display().to_string() })
        }
    }
}

/// Whitespace-separated pieces of `text` other than marker literals.
fn without_markers(text: &str) -> String {
    text.split_whitespace().filter(|w| !RESERVED.contains(w)).collect::<Vec<_>>().join(" ")
}

/// The one vocabulary shared by the instruction generator and the dialogue
/// model: every word of the triplets, the training dialogues, the fixed
/// instructions and the fallback instruction.
pub fn shared_vocab(
    cfg: &RunConfig,
    dialogues: &[Dialogue],
    triplets: &[InstructionTriplet],
) -> Result<Vocabulary, PipelineError> {
    let mut texts: Vec<String> = Vec::new();
    for t in triplets {
        texts.push(t.instruction.clone());
        texts.push(without_markers(&t.input));
        texts.push(without_markers(&t.output));
    }
    for d in dialogues {
        texts.extend(d.persona.iter().cloned());
        texts.extend(d.turns.iter().map(|t| t.text.clone()));
    }
    texts.extend(cfg.fixed_instruction_set.iter().cloned());
    texts.push(FALLBACK_INSTRUCTION.to_string());
    Ok(build_vocab(&texts, cfg.vocab_min_freq, cfg.vocab_max_size)?)
}
