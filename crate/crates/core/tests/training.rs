//! The training loop on small synthetic corpora: determinism, counters and
//! loss direction.

use cidg_core::model::{init_model, ModelConfig};
use cidg_core::synthetic::{all_texts, intent_corpus};
use cidg_core::tokenizer::{build_vocab, Vocabulary};
use cidg_core::training::{train, TrainConfig, TrainData, TrainOutcome};

fn vocab() -> Vocabulary {
    build_vocab(&all_texts(), 1, 2048).unwrap()
}

fn small(vocab: &Vocabulary) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab.len(),
        d_model: 16,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        d_ff: 32,
        max_positions: 128,
        dropout: 0.0,
    }
}

fn train_cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { learning_rate: 1e-3, epochs, batch_size: 4, max_src_len: 64, seed, ..TrainConfig::default() }
}

fn run(data: TrainData<'_>, vocab: &Vocabulary, epochs: usize, seed: u64) -> TrainOutcome {
    let params = init_model(small(vocab), seed).unwrap();
    train(params, vocab, data, &train_cfg(epochs, seed)).unwrap()
}

#[test]
fn same_seed_gives_identical_checkpoint_bytes() {
    let v = vocab();
    let labeled = intent_corpus(10, 0, "d").labeled();
    let a = run(TrainData::Labeled(&labeled), &v, 3, 5);
    let b = run(TrainData::Labeled(&labeled), &v, 3, 5);
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    assert_eq!(a.history, b.history);
    assert_eq!(a.stats, b.stats);
    let c = run(TrainData::Labeled(&labeled), &v, 3, 6);
    assert_ne!(a.checkpoint.to_bytes(), c.checkpoint.to_bytes());
}

#[test]
fn multi_task_draws_one_case_per_example() {
    let v = vocab();
    let labeled = intent_corpus(24, 1, "d").labeled();
    let epochs = 4;
    let o = run(TrainData::Labeled(&labeled), &v, epochs, 0);
    assert_eq!(o.stats.pairs_per_epoch, vec![24; epochs]);
    assert_eq!(o.stats.case_counts.iter().sum::<usize>(), 24 * epochs);
    assert!(o.stats.case_counts.iter().all(|&c| c > 0), "{:?}", o.stats.case_counts);
    assert_eq!(o.stats.steps, (epochs * 24_usize.div_ceil(4)) as u64);
    assert_eq!(o.checkpoint.meta.epochs_completed, epochs);
}

#[test]
fn response_only_uses_case_four_alone() {
    let v = vocab();
    let examples: Vec<_> = intent_corpus(13, 2, "d").labeled().into_iter().map(|l| l.example).collect();
    let o = run(TrainData::Unlabeled(&examples), &v, 3, 0);
    assert_eq!(o.stats.pairs_per_epoch, vec![13; 3]);
    assert_eq!(o.stats.case_counts, [0, 0, 0, 13 * 3]);
}

#[test]
fn instruction_generator_loss_falls_on_twenty_triplets() {
    let v = vocab();
    let triplets = intent_corpus(20, 3, "t").triplets();
    let o = run(TrainData::Triplets(&triplets), &v, 200, 0);
    assert_eq!(o.stats.instgen_pairs, 20 * 200);
    assert_eq!(o.stats.case_counts, [0; 4]);
    let (first, last) = (o.history[0], *o.history.last().unwrap());
    assert!(last < first, "loss {first} -> {last}");
    assert!(o.history.iter().all(|l| l.is_finite()));
}

#[cfg(feature = "parallel")]
#[test]
fn gradients_do_not_depend_on_thread_count() {
    use cidg_core::model::ModelParams;
    use cidg_core::taskformat::{format_case, TaskCase};
    use cidg_core::training::compute_grads;

    let v = vocab();
    let labeled = intent_corpus(12, 4, "d").labeled();
    let batch: Vec<_> =
        labeled.iter().enumerate().map(|(i, ex)| format_case(ex, TaskCase::ALL[i % 4], &v, 64).unwrap()).collect();
    let params: ModelParams<f32> = init_model(small(&v), 9).unwrap();
    let on = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| compute_grads(&params, &batch, None).unwrap())
    };
    let (one, four) = (on(1), on(4));
    assert_eq!(one.loss.to_bits(), four.loss.to_bits());
    assert_eq!(one.grads.tensors, four.grads.tensors);
}
