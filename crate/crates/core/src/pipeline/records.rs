//! Files the pipeline writes between stages.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{read_jsonl, write_jsonl};
use crate::metrics::EvalReport;
use crate::training::TrainStats;

/// One labeled example, pointing back into the dialogue corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub instruction: String,
    /// The generator produced nothing and the fallback was used.
    pub fallback: bool,
}

/// One generated turn. `instruction` is null when no instruction was used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub instruction: Option<String>,
    pub response: String,
}

/// Per-epoch loss and loop counters written next to each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub loss: Vec<f64>,
    pub stats: TrainStats,
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledRecord>, PipelineError> {
    Ok(read_jsonl(
        path,
        |r: &LabeledRecord, _| {
            if r.instruction.trim().is_empty() {
                Err("empty instruction".into())
            } else {
                Ok(())
            }
        },
    )?)
}

pub fn save_labeled(path: &Path, records: &[LabeledRecord]) -> Result<(), PipelineError> {
    Ok(write_jsonl(path, records)?)
}

pub fn load_generations(path: &Path) -> Result<Vec<GenerationRecord>, PipelineError> {
    Ok(read_jsonl(path, |_: &GenerationRecord, _| Ok(()))?)
}

pub fn save_generations(path: &Path, records: &[GenerationRecord]) -> Result<(), PipelineError> {
    Ok(write_jsonl(path, records)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes to JSON");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Parse { path: path.display().to_string(), message: e.to_string() })
}

pub fn save_report(path: &Path, report: &EvalReport) -> Result<(), PipelineError> {
    write_json(path, report)
}

pub fn load_report(path: &Path) -> Result<EvalReport, PipelineError> {
    read_json(path)
}

pub(super) fn save_history(path: &Path, history: &History) -> Result<(), PipelineError> {
    write_json(path, history)
}

pub fn load_history(path: &Path) -> Result<History, PipelineError> {
    read_json(path)
}
