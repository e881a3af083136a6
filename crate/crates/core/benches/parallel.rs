//! Rayon pool against the in-order fallback on the three data-parallel hot
//! paths: scoring, per-sentence gradients and prediction.
//!
//! `cargo bench -p unimrp` compares both modes of the default build;
//! `--no-default-features` compiles the fallback only, so both ids then
//! measure the sequential path.

use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use unimrp::evaluator::{evaluate, EvalOptions};
use unimrp::model::{ModelConfig, MultitaskWeights, Objective, Parser};
use unimrp::nn::Ctx;
use unimrp::parallel::{self, Execution};
use unimrp::trainer::predict_corpus;
use unimrp::{synthetic, Framework};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];
const FWS: [Framework; 5] = [Framework::Dm, Framework::Psd, Framework::Eds, Framework::Ucca, Framework::Amr];

fn benches(c: &mut Criterion) {
    let corpus = synthetic::corpus(48, 1);
    let emb = synthetic::embeddings(&corpus, 6, 2, 6, 3);
    let (parser, store) = Parser::build(&ModelConfig::small(), &FWS, &corpus.sentences, &emb, 1).unwrap();
    let stores: BTreeMap<Framework, _> = FWS.iter().map(|&f| (f, store.clone())).collect();
    let prepared: Vec<_> = corpus.sentences.iter().map(|s| parser.prepare(s, &emb).unwrap()).collect();
    let gold = corpus.all_graphs();
    let pred = predict_corpus(&parser, &stores, &corpus.sentences, &emb, &FWS, Execution::Parallel).unwrap();
    let objective = Objective::Multitask(MultitaskWeights::default());

    let mut g = c.benchmark_group("evaluate");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate(black_box(&gold), black_box(&pred), EvalOptions::default(), exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("gradients");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let grads = parallel::map(&corpus.sentences, exec, |i, s| {
                    parser.sentence_gradients(&store, s, &prepared[i], &emb, &objective, &mut Ctx::eval()).unwrap()
                });
                let mut total = None;
                for (_, _, g) in grads.into_iter().flatten() {
                    match &mut total {
                        None => total = Some(g),
                        Some(t) => t.merge(&g),
                    }
                }
                total
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("predict");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| predict_corpus(&parser, &stores, black_box(&corpus.sentences), &emb, &FWS, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = parallel_vs_sequential;
    config = Criterion::default().sample_size(10);
    targets = benches
}
criterion_main!(parallel_vs_sequential);
