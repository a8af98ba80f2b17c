//! Batch gradients and batch decoding on the global rayon pool versus a
//! single-thread pool. Built without `parallel`, only the sequential path
//! runs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cidg_core::decoding::{DecodeConfig, Generator};
use cidg_core::model::{init_model, ModelConfig, ModelParams};
use cidg_core::synthetic::{all_texts, intent_corpus};
use cidg_core::taskformat::{format_case, SeqPair, TaskCase};
use cidg_core::tokenizer::{build_vocab, Vocabulary};
use cidg_core::training::compute_grads;

struct Fixture {
    vocab: Vocabulary,
    params: ModelParams<f32>,
    batch: Vec<SeqPair>,
    contexts: Vec<cidg_core::corpus::Context>,
}

fn fixture() -> Fixture {
    let texts = all_texts();
    let vocab = build_vocab(&texts, 1, 2048).expect("vocabulary");
    let mut cfg = ModelConfig::desk(vocab.len());
    cfg.max_positions = 128;
    let params = init_model(cfg, 0).expect("model");
    let labeled = intent_corpus(16, 0, "bench").labeled();
    let batch = labeled
        .iter()
        .enumerate()
        .map(|(i, ex)| format_case(ex, TaskCase::ALL[i % 4], &vocab, 64).expect("pair"))
        .collect();
    let contexts = labeled.iter().take(8).map(|l| l.example.context.clone()).collect();
    Fixture { vocab, params, batch, contexts }
}

fn run_grads(f: &Fixture) {
    compute_grads(&f.params, &f.batch, None).expect("gradients");
}

fn run_decode(f: &Fixture) {
    let g = Generator {
        model: &f.params,
        vocab: &f.vocab,
        decode: DecodeConfig { max_len: 16, ..DecodeConfig::default() },
        max_src_len: 64,
    };
    let out = cidg_core::par::map(&f.contexts, |c| g.respond(c).expect("decode"));
    assert_eq!(out.len(), f.contexts.len());
}

fn bench(c: &mut Criterion) {
    let f = fixture();
    let mut group = c.benchmark_group("parallel");
    group.sample_size(10);

    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
        let threads = rayon::current_num_threads();
        group.bench_function(BenchmarkId::new("grads", format!("global-pool-{threads}")), |b| b.iter(|| run_grads(&f)));
        group.bench_function(BenchmarkId::new("grads", "single-thread"), |b| {
            b.iter(|| single.install(|| run_grads(&f)))
        });
        group.bench_function(BenchmarkId::new("decode", format!("global-pool-{threads}")), |b| {
            b.iter(|| run_decode(&f))
        });
        group.bench_function(BenchmarkId::new("decode", "single-thread"), |b| {
            b.iter(|| single.install(|| run_decode(&f)))
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        group.bench_function(BenchmarkId::new("grads", "sequential"), |b| b.iter(|| run_grads(&f)));
        group.bench_function(BenchmarkId::new("decode", "sequential"), |b| b.iter(|| run_decode(&f)));
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
