//! Teacher-forced training for both the instruction generator and the
//! multi-task dialogue model.

mod checkpoint;
pub mod gradcheck;
mod loss;
mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DialogueExample, InstructionTriplet, LabeledExample};
use crate::model::{ModelError, ModelParams};
use crate::taskformat::{
    format_case, format_instgen, format_response_only, sample_case, FormatError, PairKind, SeqPair, TrainingMode,
};
use crate::tokenizer::Vocabulary;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use loss::{batch_loss, compute_grads, nll_loss, pad_batch, teacher_forcing, BatchGrads};
pub use optim::{adamw_step, lr_at, warmup_steps, OptimizerState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("target has no non-PAD tokens")]
    AllPadTarget,
    #[error("batch is empty or has no target tokens")]
    EmptyBatch,
    #[error("training data is empty")]
    EmptyDataset,
    #[error("pair {index} in batch: {source}")]
    Model {
        index: usize,
        #[source]
        source: ModelError,
    },
    #[error("example {index}: {source}")]
    Format {
        index: usize,
        #[source]
        source: FormatError,
    },
    #[error("non-finite loss on pair {index} of the batch (source {src:?}, target {target:?})")]
    NonFiniteLoss { index: usize, src: Vec<u32>, target: Vec<u32> },
    #[error("gradient, moment and parameter shapes differ")]
    ShapeMismatch,
    #[error("not a checkpoint (bad magic bytes)")]
    NotACheckpoint,
    #[error("unsupported checkpoint version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint header: {0}")]
    BadHeader(String),
    #[error("checkpoint is inconsistent: {0}")]
    Inconsistent(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub adam_eps: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Global gradient-norm ceiling; zero or negative disables clipping.
    pub grad_clip_norm: f64,
    pub max_src_len: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            epochs: 40,
            batch_size: 32,
            warmup_ratio: 0.03,
            weight_decay: 1e-6,
            adam_eps: 1e-8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            grad_clip_norm: 1.0,
            max_src_len: crate::taskformat::DEFAULT_MAX_SRC_LEN,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 || self.weight_decay < 0.0 {
            return bad("adam_eps must be positive and weight_decay non-negative");
        }
        Ok(())
    }
}

/// What to train on. The variant fixes how each example becomes a pair.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    /// Multi-task training: one uniformly drawn case per example.
    Labeled(&'a [LabeledExample]),
    /// Response-only training (case 4), no instructions needed.
    Unlabeled(&'a [DialogueExample]),
    /// Instruction-generator training on `{I, X, Y}` triplets.
    Triplets(&'a [InstructionTriplet]),
}

impl TrainData<'_> {
    pub fn len(&self) -> usize {
        match self {
            TrainData::Labeled(d) => d.len(),
            TrainData::Unlabeled(d) => d.len(),
            TrainData::Triplets(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Render example `i`, drawing its case from `rng` where applicable.
    fn format(&self, i: usize, rng: &mut ChaCha8Rng, vocab: &Vocabulary, max: usize) -> Result<SeqPair, FormatError> {
        match self {
            TrainData::Labeled(d) => format_case(&d[i], sample_case(rng, TrainingMode::Full), vocab, max),
            TrainData::Unlabeled(d) => {
                sample_case(rng, TrainingMode::ResponseOnly);
                format_response_only(&d[i], vocab, max)
            }
            TrainData::Triplets(d) => format_instgen(&d[i].input, &d[i].output, Some(&d[i].instruction), vocab, max),
        }
    }
}

/// Counters describing what the loop consumed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// Pairs consumed in each epoch.
    pub pairs_per_epoch: Vec<usize>,
    /// Pairs per task case over the whole run, indexed by [`TaskCase::index`].
    pub case_counts: [usize; 4],
    /// Instruction-generator pairs over the whole run.
    pub instgen_pairs: usize,
    pub steps: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Token-weighted mean loss of each epoch.
    pub history: Vec<f64>,
    pub stats: TrainStats,
}

fn step_seed(seed: u64, step: u64) -> u64 {
    seed.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ step.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Train `params` on `data`. One generator seeded with `cfg.seed` drives the
/// per-epoch shuffle and the per-example case draws, so a run is fully
/// determined by its inputs.
pub fn train(
    mut params: ModelParams<f32>,
    vocab: &Vocabulary,
    data: TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if params.config.vocab_size != vocab.len() {
        return Err(TrainError::InvalidConfig(format!(
            "model vocab_size {} does not match vocabulary of {}",
            params.config.vocab_size,
            vocab.len()
        )));
    }

    let n = data.len();
    let batches_per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let total_steps = batches_per_epoch * cfg.epochs as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(&params);
    let mut stats = TrainStats::default();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut pairs = Vec::with_capacity(n);
        for &i in &order {
            let pair = data
                .format(i, &mut rng, vocab, cfg.max_src_len)
                .map_err(|source| TrainError::Format { index: i, source })?;
            match pair.kind {
                PairKind::Case(c) => stats.case_counts[c.index()] += 1,
                _ => stats.instgen_pairs += 1,
            }
            pairs.push(pair);
        }
        stats.pairs_per_epoch.push(pairs.len());

        let mut loss_sum = 0.0;
        let mut token_sum = 0usize;
        for batch in pairs.chunks(cfg.batch_size) {
            let batch = pad_batch(batch);
            let g = compute_grads(&params, &batch, Some(step_seed(cfg.seed, opt.step))).inspect_err(|e| {
                log::error!("epoch {} step {}: {e}", epoch + 1, opt.step + 1);
            })?;
            let lr = lr_at(opt.step + 1, total_steps, cfg);
            adamw_step(&mut opt, &mut params, &g.grads, lr, cfg)?;
            loss_sum += g.loss * g.tokens as f64;
            token_sum += g.tokens;
        }
        stats.steps = opt.step;
        let mean = loss_sum / token_sum as f64;
        log::info!("epoch {}/{}: loss {mean:.4}", epoch + 1, cfg.epochs);
        history.push(mean);
    }

    let checkpoint = Checkpoint {
        model_config: params.config,
        train_config: cfg.clone(),
        vocab: vocab.clone(),
        params,
        meta: CheckpointMeta { seed: cfg.seed, epochs_completed: cfg.epochs, final_loss: history.last().copied() },
    };
    Ok(TrainOutcome { checkpoint, history, stats })
}
