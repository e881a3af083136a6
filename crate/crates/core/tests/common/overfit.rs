//! Memorization runs on a small synthetic corpus.

use unimrp::evaluator::{f1, mrp_f1};
use unimrp::model::{Embeddings, ModelConfig};
use unimrp::trainer::{train_single, Stage, TrainConfig};
use unimrp::ucca::serialize_ucca;
use unimrp::{synthetic, Corpus, Framework};

pub const SENTENCES: usize = 32;

pub fn corpus() -> (Corpus, Embeddings) {
    let corpus = synthetic::corpus(SENTENCES, 32);
    let emb = synthetic::embeddings(&corpus, 6, 2, 6, 3);
    (corpus, emb)
}

pub fn config(epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig {
        seed: 5,
        jobs: 1,
        model: ModelConfig::small(),
        stage: Stage {
            lr: 3e-3,
            epochs,
            batch_size: 8,
            ..Stage::default()
        },
        ..TrainConfig::default()
    };
    cfg.model.amr.beam_width = 1;
    cfg
}

/// First epoch at which both DM and PSD labeled F1 on the training
/// sentences reach `target`, and the best F1 of each.
pub fn sdp(epochs: usize, target: f64) -> (Option<usize>, [f64; 2]) {
    let (c, emb) = corpus();
    let m = train_single(&[Framework::Dm, Framework::Psd], &c.sentences, &c.sentences, &emb, &config(epochs), None).unwrap();
    let reached = m
        .history
        .iter()
        .find(|r| ["dm", "psd"].iter().all(|k| r.validation.get(*k).is_some_and(|v| *v >= target)))
        .map(|r| r.epoch);
    let best = |k: &str| m.best.get(k).map_or(0.0, |c| c.value);
    (reached, [best("dm"), best("psd")])
}

/// Sentences whose free-running pointer sequence equals the gold one, and
/// labeled edge F1 of the decoded graphs.
pub fn ucca(epochs: usize) -> (usize, f64) {
    let (c, emb) = corpus();
    let m = train_single(&[Framework::Ucca], &c.sentences, &c.sentences, &emb, &config(epochs), None).unwrap();
    let store = &m.best["ucca"].store;
    let mut exact = 0;
    let (mut gold, mut pred, mut matched) = (0, 0, 0);
    for s in &c.sentences {
        let f = m.parser.features(s, &emb).unwrap();
        let sc = m.parser.scores(store, s, &f, &emb, Framework::Ucca).unwrap();
        let g = s.graph(Framework::Ucca).unwrap();
        if sc.ucca.as_ref().unwrap().pointers == serialize_ucca(g, &s.tokens).unwrap().pointers {
            exact += 1;
        }
        let p = m.parser.assemble(s, &sc, Framework::Ucca).unwrap();
        let score = mrp_f1(g, &p).unwrap();
        let e = score.component("edges");
        gold += e.gold;
        pred += e.pred;
        matched += e.matched;
    }
    let precision = matched as f64 / pred.max(1) as f64;
    let recall = matched as f64 / gold.max(1) as f64;
    (exact, f1(precision, recall))
}

/// Sentences whose greedy node sequence (labels and replica pointers)
/// equals the gold tree's.
pub fn amr(epochs: usize) -> usize {
    let (c, emb) = corpus();
    let m = train_single(&[Framework::Amr], &c.sentences, &c.sentences, &emb, &config(epochs), None).unwrap();
    let store = &m.best["amr"].store;
    let head = m.parser.amr.as_ref().unwrap();
    let mut exact = 0;
    for s in &c.sentences {
        let p = m.parser.prepare(s, &emb).unwrap();
        let gold: Vec<(String, Option<usize>)> =
            head.gold_tokens(p.amr.as_ref().unwrap(), &s.tokens).into_iter().map(|t| (t.label, t.replica_of)).collect();
        let sc = m.parser.scores(store, s, &p.features, &emb, Framework::Amr).unwrap();
        let got: Vec<(String, Option<usize>)> = sc.amr.unwrap().tokens.into_iter().map(|t| (t.label, t.replica_of)).collect();
        if got == gold {
            exact += 1;
        }
    }
    exact
}
