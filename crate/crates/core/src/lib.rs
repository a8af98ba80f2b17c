//! Context-based instruction tuning for multi-turn dialogue generation.
//!
//! A single encoder-decoder learns four conditional tasks selected by
//! sentinel tokens: instruction from context (with or without the gold
//! response) and response from context (with or without an instruction).
//! At inference it can write its own instruction for the current turn and
//! then answer under it.
//!
//! Module map:
//! - [`corpus`]: dialogue, triplet and labeled-example data plus JSONL I/O
//! - [`tokenizer`]: word-level vocabulary with reserved sentinel tokens
//! - [`taskformat`]: source/target rendering, truncation, case sampling
//! - [`model`]: the transformer, forward and backward
//! - [`training`]: loss, AdamW, schedule, training loop, checkpoints
//! - [`decoding`]: greedy and beam search, naive and iterative inference
//! - [`metrics`]: corpus BLEU-1/2 and Distinct-1/2
//! - [`pipeline`]: the end-to-end commands behind the CLI
//! - [`synthetic`]: generated toy corpora with a hidden intent per turn
//! - [`par`]: order-preserving data-parallel maps (feature `parallel`)

pub mod corpus;
pub mod decoding;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod synthetic;
pub mod taskformat;
pub mod tokenizer;
pub mod training;
