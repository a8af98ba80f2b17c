//! One function per pipeline stage.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::records::{save_history, History};
use super::{
    load_generations, load_labeled, save_generations, save_labeled, save_report, shared_vocab, GenerationRecord,
    InstructionMode, LabeledRecord, PipelineError, RunConfig, FALLBACK_INSTRUCTION,
};
use crate::corpus::{expand_examples, load_dialogues, load_triplets, DialogueExample, LabeledExample};
use crate::decoding::{DecodeError, Generator, Seq2Seq};
use crate::metrics::{evaluate, EvalReport};
use crate::model::init_model;
use crate::par;
use crate::taskformat::serialize_context;
use crate::training::{load_checkpoint, save_checkpoint, train, Checkpoint, TrainData, TrainOutcome};

fn history_path(checkpoint: &Path) -> PathBuf {
    PathBuf::from(format!("{}.history.json", checkpoint.display()))
}

fn finish_training(outcome: &TrainOutcome, path: &Path) -> Result<(), PipelineError> {
    save_checkpoint(&outcome.checkpoint, path)?;
    save_history(&history_path(path), &History { loss: outcome.history.clone(), stats: outcome.stats.clone() })?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn example_error(ex: &DialogueExample) -> impl FnOnce(DecodeError) -> PipelineError + '_ {
    move |source| PipelineError::Example { dialogue_id: ex.dialogue_id.clone(), turn_index: ex.turn_index, source }
}

/// Train the instruction generator on the triplet corpus. The vocabulary it
/// stores is the one every later stage shares.
pub fn cmd_train_instgen(cfg: &RunConfig) -> Result<TrainOutcome, PipelineError> {
    cfg.validate()?;
    let triplets = load_triplets(&cfg.existing(&cfg.triplets, "triplets file", "triplets")?)?;
    let dialogues = load_dialogues(&cfg.existing(&cfg.dialogues, "dialogues file", "dialogues")?)?;
    let vocab = shared_vocab(cfg, &dialogues, &triplets)?;
    log::info!("instruction generator: {} triplets, vocabulary {}", triplets.len(), vocab.len());
    let params = init_model(cfg.model_config(vocab.len()), cfg.seed)?;
    let outcome = train(params, &vocab, TrainData::Triplets(&triplets), &cfg.train_config())?;
    finish_training(&outcome, &cfg.resolve(&cfg.instgen_checkpoint))?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSummary {
    pub records: usize,
    pub fallbacks: usize,
}

/// Label every example of the dialogue corpus with an instruction decoded
/// by the instruction generator from (context, response).
pub fn cmd_label(cfg: &RunConfig) -> Result<LabelSummary, PipelineError> {
    cfg.validate()?;
    let ckpt = load_checkpoint(&cfg.existing(
        &cfg.instgen_checkpoint,
        "instruction-generator checkpoint",
        "instgen_checkpoint",
    )?)?;
    let dialogues = load_dialogues(&cfg.existing(&cfg.dialogues, "dialogues file", "dialogues")?)?;
    let examples = expand_examples(&dialogues);
    let g = Generator {
        model: &ckpt.params,
        vocab: &ckpt.vocab,
        decode: cfg.decode_config(),
        max_src_len: ckpt.train_config.max_src_len,
    };
    let decoded = par::map(&examples, |ex| g.label(&serialize_context(&ex.context), &ex.response));

    let mut records = Vec::with_capacity(examples.len());
    let mut fallbacks = 0;
    for (ex, d) in examples.iter().zip(decoded) {
        let instruction = d.map_err(example_error(ex))?;
        let fallback = instruction.trim().is_empty();
        if fallback {
            fallbacks += 1;
            log::warn!(
                "dialogue {:?} turn {}: empty instruction, using {FALLBACK_INSTRUCTION:?}",
                ex.dialogue_id,
                ex.turn_index
            );
        }
        records.push(LabeledRecord {
            dialogue_id: ex.dialogue_id.clone(),
            turn_index: ex.turn_index,
            instruction: if fallback { FALLBACK_INSTRUCTION.to_string() } else { instruction },
            fallback,
        });
    }
    save_labeled(&cfg.resolve(&cfg.labeled), &records)?;
    log::info!("labeled {} examples ({fallbacks} fallbacks)", records.len());
    Ok(LabelSummary { records: records.len(), fallbacks })
}

/// Join labeled records back onto their examples, in record order.
fn join_labels(
    examples: &[DialogueExample],
    records: &[LabeledRecord],
    path: &Path,
) -> Result<Vec<LabeledExample>, PipelineError> {
    let index: HashMap<(&str, usize), &DialogueExample> =
        examples.iter().map(|e| ((e.dialogue_id.as_str(), e.turn_index), e)).collect();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let key = (r.dialogue_id.as_str(), r.turn_index);
        let ex = index.get(&key).ok_or_else(|| PipelineError::Unmatched {
            path: path.display().to_string(),
            dialogue_id: r.dialogue_id.clone(),
            turn_index: r.turn_index,
        })?;
        if !seen.insert(key) {
            return Err(PipelineError::Duplicate {
                path: path.display().to_string(),
                dialogue_id: r.dialogue_id.clone(),
                turn_index: r.turn_index,
            });
        }
        out.push(LabeledExample { example: (*ex).clone(), instruction: r.instruction.clone() });
    }
    Ok(out)
}

/// Train the dialogue model: multi-task on labeled examples, or
/// response-only when the instruction mode is `none`.
pub fn cmd_train_dialog(cfg: &RunConfig) -> Result<TrainOutcome, PipelineError> {
    cfg.validate()?;
    let dialogues = load_dialogues(&cfg.existing(&cfg.dialogues, "dialogues file", "dialogues")?)?;
    let triplets_path = cfg.resolve(&cfg.triplets);
    let triplets = if triplets_path.exists() { load_triplets(&triplets_path)? } else { Vec::new() };
    let vocab = shared_vocab(cfg, &dialogues, &triplets)?;
    let examples = expand_examples(&dialogues);
    let params = init_model(cfg.model_config(vocab.len()), cfg.seed)?;
    let train_cfg = cfg.train_config();

    let outcome = if cfg.instruction_mode == InstructionMode::None {
        log::info!("dialogue model (response only): {} examples", examples.len());
        train(params, &vocab, TrainData::Unlabeled(&examples), &train_cfg)?
    } else {
        let path = cfg.existing(&cfg.labeled, "labeled examples file", "labeled")?;
        let labeled = join_labels(&examples, &load_labeled(&path)?, &path)?;
        log::info!("dialogue model (multi-task): {} labeled examples", labeled.len());
        train(params, &vocab, TrainData::Labeled(&labeled), &train_cfg)?
    };
    finish_training(&outcome, &cfg.resolve(&cfg.dialog_checkpoint))?;
    Ok(outcome)
}

/// Generate for the example at position `index` of the test set under
/// `mode`.
pub fn generate_one<M: Seq2Seq + ?Sized>(
    g: &Generator<'_, M>,
    ex: &DialogueExample,
    index: usize,
    mode: InstructionMode,
    fixed: &[String],
) -> Result<GenerationRecord, DecodeError> {
    let (instruction, response) = match mode {
        InstructionMode::None => (None, g.respond(&ex.context)?),
        InstructionMode::Fixed => {
            let i = fixed[index % fixed.len()].clone();
            let r = g.respond_with(&ex.context, &i)?;
            (Some(i), r)
        }
        InstructionMode::GeneratedNaive => {
            let out = g.naive(ex)?;
            (out.instruction, out.response)
        }
        InstructionMode::GeneratedIterative => {
            let out = g.iterative(&ex.context)?;
            (out.instruction, out.response)
        }
        InstructionMode::Oracle => {
            let out = g.oracle(ex)?;
            (out.instruction, out.response)
        }
    };
    Ok(GenerationRecord { dialogue_id: ex.dialogue_id.clone(), turn_index: ex.turn_index, instruction, response })
}

fn load_dialog_model(cfg: &RunConfig) -> Result<Checkpoint, PipelineError> {
    Ok(load_checkpoint(&cfg.existing(&cfg.dialog_checkpoint, "dialogue-model checkpoint", "dialog_checkpoint")?)?)
}

/// Generate a response (and, depending on the mode, an instruction) for
/// every example of the test corpus.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Vec<GenerationRecord>, PipelineError> {
    cfg.validate()?;
    let ckpt = load_dialog_model(cfg)?;
    let dialogues = load_dialogues(&cfg.existing(&cfg.test_dialogues, "test dialogues file", "test_dialogues")?)?;
    let examples = expand_examples(&dialogues);
    let g = Generator {
        model: &ckpt.params,
        vocab: &ckpt.vocab,
        decode: cfg.decode_config(),
        max_src_len: ckpt.train_config.max_src_len,
    };
    let mode = cfg.instruction_mode;
    let out = par::map_indexed(&examples, |i, ex| generate_one(&g, ex, i, mode, &cfg.fixed_instruction_set));
    let mut records = Vec::with_capacity(examples.len());
    for (ex, r) in examples.iter().zip(out) {
        records.push(r.map_err(example_error(ex))?);
    }
    save_generations(&cfg.resolve(&cfg.generations), &records)?;
    log::info!("generated {} responses ({})", records.len(), mode.name());
    Ok(records)
}

/// Score the generations file against the test corpus and write the report.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport, PipelineError> {
    let gen_path = cfg.existing(&cfg.generations, "generations file", "generations")?;
    let generations = load_generations(&gen_path)?;
    let dialogues = load_dialogues(&cfg.existing(&cfg.test_dialogues, "test dialogues file", "test_dialogues")?)?;
    let examples = expand_examples(&dialogues);
    let index: HashMap<(&str, usize), usize> =
        examples.iter().enumerate().map(|(i, e)| ((e.dialogue_id.as_str(), e.turn_index), i)).collect();

    let mut pairs: Vec<(usize, &str)> = Vec::with_capacity(generations.len());
    let mut seen = std::collections::HashSet::new();
    for g in &generations {
        let at = *index.get(&(g.dialogue_id.as_str(), g.turn_index)).ok_or_else(|| PipelineError::Unmatched {
            path: gen_path.display().to_string(),
            dialogue_id: g.dialogue_id.clone(),
            turn_index: g.turn_index,
        })?;
        if !seen.insert(at) {
            return Err(PipelineError::Duplicate {
                path: gen_path.display().to_string(),
                dialogue_id: g.dialogue_id.clone(),
                turn_index: g.turn_index,
            });
        }
        pairs.push((at, &g.response));
    }
    pairs.sort_by_key(|p| p.0);
    let hyps: Vec<&str> = pairs.iter().map(|p| p.1).collect();
    let refs: Vec<&str> = pairs.iter().map(|p| examples[p.0].response.as_str()).collect();
    let report = evaluate(&hyps, &refs)?;
    save_report(&cfg.resolve(&cfg.report), &report)?;
    Ok(report)
}
