//! End-to-end checks shared by the topic tests and the acceptance report.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unimrp::evaluator::{evaluate, EvalOptions};
use unimrp::graph::write_mrp;
use unimrp::model::{Embeddings, Losses, ModelConfig, MultitaskWeights, Objective, Parser};
use unimrp::nn::Ctx;
use unimrp::parallel::Execution;
use unimrp::trainer::ensemble::{build_ensemble, ensemble_predict, EnsembleMember, Member};
use unimrp::trainer::{predict_corpus, train_single, Stage, TrainConfig};
use unimrp::{synthetic, Framework, Sentence};
use unimrp_tensor::ParamStore;

const ALL: [Framework; 5] = [Framework::Dm, Framework::Psd, Framework::Eds, Framework::Ucca, Framework::Amr];
const JOINT: [Framework; 4] = [Framework::Dm, Framework::Psd, Framework::Ucca, Framework::Amr];

fn built(n: usize, seed: u64) -> (Vec<Sentence>, Embeddings, Parser, ParamStore) {
    let corpus = synthetic::corpus(n, seed);
    let emb = synthetic::embeddings(&corpus, 6, 2, 6, 3);
    let (parser, store) = Parser::build(&ModelConfig::small(), &ALL, &corpus.sentences, &emb, seed).unwrap();
    (corpus.sentences, emb, parser, store)
}

/// The joint objective written out term by term.
fn weighted_sum(w: &MultitaskWeights, l: &Losses<f64>) -> f64 {
    let mut total = 0.0;
    if let Some(d) = l.dm {
        total += w.biaf * (w.label * (d.label + w.frame * d.frame.unwrap()) + (1.0 - w.label) * d.edge);
    }
    if let Some(p) = l.psd {
        total += w.biaf * (w.label * p.label + (1.0 - w.label) * p.edge);
    }
    if let Some(u) = l.ucca {
        total += w.biaf * (w.label * u.label + (1.0 - w.label) * u.edge) + w.dec_ucca * u.dec + w.remote_ucca * u.remote;
    }
    if let Some(a) = l.amr {
        total += w.biaf * (w.label * a.label + (1.0 - w.label) * a.edge) + w.dec_amr * a.dec + w.cov_amr * a.cov;
    }
    total
}

fn head_prefixes(fw: Framework) -> &'static [&'static str] {
    match fw {
        Framework::Dm => &["dm.", "dm_frame."],
        Framework::Psd => &["psd."],
        Framework::Ucca => &["ucca."],
        Framework::Amr => &["amr."],
        Framework::Eds => &["eds_"],
    }
}

/// The multitask loss of sentences with random frameworks removed equals
/// the weighted sum of separately computed single-framework losses, and
/// heads of removed frameworks get exactly zero gradient.
pub fn loss_algebra() -> Result<String, String> {
    let (sentences, emb, parser, store) = built(10, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut w = MultitaskWeights::default();
    let mut worst: f64 = 0.0;
    let mut zero_checked = 0;
    for (k, s) in sentences.iter().enumerate() {
        for round in 0..3 {
            if round > 0 {
                // Random non-default coefficients too.
                w = MultitaskWeights {
                    biaf: rng.random_range(0.1..2.0),
                    label: rng.random_range(0.0..1.0),
                    frame: rng.random_range(0.0..1.0),
                    remote_ucca: rng.random_range(0.0..1.0),
                    dec_ucca: rng.random_range(0.0..1.0),
                    dec_amr: rng.random_range(0.0..2.0),
                    cov_amr: rng.random_range(0.0..2.0),
                };
            }
            let mut masked = s.clone();
            let mut fws = JOINT.to_vec();
            fws.shuffle(&mut rng);
            let keep = rng.random_range(1..=JOINT.len());
            let absent: Vec<Framework> = fws[keep..].to_vec();
            for fw in &absent {
                masked.graphs.remove(fw);
            }
            let p = parser.prepare(&masked, &emb).map_err(|e| e.to_string())?;
            let (value, _, grads) = parser
                .sentence_gradients(&store, &masked, &p, &emb, &Objective::Multitask(w), &mut Ctx::eval())
                .map_err(|e| e.to_string())?
                .ok_or("no loss for a sentence with graphs")?;
            let mut separate = Losses::default();
            for fw in &fws[..keep] {
                let l = parser.eval_losses(&store, s, &parser.prepare(s, &emb).unwrap(), &emb, &[*fw]).unwrap();
                match fw {
                    Framework::Dm => separate.dm = l.dm,
                    Framework::Psd => separate.psd = l.psd,
                    Framework::Ucca => separate.ucca = l.ucca,
                    _ => separate.amr = l.amr,
                }
            }
            let expected = weighted_sum(&w, &separate);
            let err = (value - expected).abs();
            worst = worst.max(err);
            if err > 1e-10 {
                return Err(format!("sentence {k}: multitask {value} vs weighted sum {expected}"));
            }
            for fw in absent.iter().copied().chain([Framework::Eds]) {
                for id in store.ids().filter(|&id| head_prefixes(fw).iter().any(|x| store.name(id).starts_with(x))) {
                    if let Some(g) = grads.get(id) {
                        if g.data().iter().any(|&x| x != 0.0) {
                            return Err(format!("sentence {k}: {} has gradient without {}", store.name(id), fw.as_str()));
                        }
                    }
                    zero_checked += 1;
                }
            }
        }
    }
    Ok(format!("max |difference| {worst:.1e}, {zero_checked} absent-head parameters with zero gradient"))
}

/// Ensembles of K copies of one model predict exactly what the model alone
/// predicts, for every framework.
pub fn identical_members() -> Result<String, String> {
    let (sentences, emb, parser, store) = built(6, 8);
    let stores: BTreeMap<Framework, ParamStore> = ALL.iter().map(|&f| (f, store.clone())).collect();
    let mut graphs = 0;
    for fw in ALL {
        let single = predict_corpus(&parser, &stores, &sentences, &emb, &[fw], Execution::Sequential).map_err(|e| e.to_string())?;
        for k in [1, 3, 4] {
            let members: Vec<Member> = (0..k).map(|_| Member { parser: &parser, stores: &stores }).collect();
            let ens = ensemble_predict(&members, &sentences, &emb, fw, Execution::Sequential).map_err(|e| e.to_string())?;
            if ens != single {
                return Err(format!("{} ensemble of {k} differs from its member", fw.as_str()));
            }
            graphs += ens.len();
        }
    }
    Ok(format!("{graphs} graphs identical"))
}

/// Greedy selection adds candidates in descending F1 order and stops at the
/// first one that does not improve, without scoring later candidates.
pub fn greedy_selection() -> Result<String, String> {
    let cand = |name: &str, f1: f64| EnsembleMember { name: name.into(), f1 };
    let candidates = vec![cand("a", 0.60), cand("b", 0.80), cand("c", 0.70), cand("d", 0.75), cand("e", 0.50)];
    let mut calls = Vec::new();
    let spec = build_ensemble(&candidates, Framework::Dm, |idx| {
        calls.push(idx.to_vec());
        Ok(match idx {
            [1, 3] => 0.82,
            [1, 3, 2] => 0.82,
            _ => 0.99,
        })
    })
    .map_err(|e| e.to_string())?;
    if spec.members != ["b", "d"] || spec.f1 != 0.82 || calls != [vec![1, 3], vec![1, 3, 2]] {
        return Err(format!("selected {:?} at {} after scoring {calls:?}", spec.members, spec.f1));
    }
    let amr = build_ensemble(&candidates, Framework::Amr, |_| Err(unimrp::Error::model("AMR scored an ensemble"))).map_err(|e| e.to_string())?;
    if amr.members != ["b"] {
        return Err(format!("AMR kept {:?}", amr.members));
    }
    Ok("stopped after b, d".into())
}

/// Bytes of everything one train, parse and evaluate run produces.
fn pipeline_bytes(dir: &Path, jobs: usize) -> Vec<(String, Vec<u8>)> {
    let corpus = synthetic::corpus(12, 10);
    let emb = synthetic::embeddings(&corpus, 6, 2, 6, 3);
    let (train, val) = corpus.sentences.split_at(8);
    let cfg = TrainConfig {
        seed: 17,
        jobs,
        model: ModelConfig::small(),
        stage: Stage {
            lr: 3e-3,
            epochs: 4,
            batch_size: 4,
            ..Stage::default()
        },
        ..TrainConfig::default()
    };
    let run = dir.join("run");
    let fws = [Framework::Dm, Framework::Psd];
    let model = train_single(&fws, train, val, &emb, &cfg, Some(&run)).unwrap();
    let stores = model.stores();
    let exec = cfg.execution();
    let pred = predict_corpus(&model.parser, &stores, val, &emb, &fws, exec).unwrap();
    let gold: Vec<_> = val.iter().flat_map(|s| fws.iter().filter_map(|f| s.graph(*f).cloned())).collect();
    let report = evaluate(&gold, &pred, EvalOptions::default(), exec).unwrap();
    let mut mrp = Vec::new();
    write_mrp(&pred, &mut mrp).unwrap();
    model.save(&dir.join("model")).unwrap();
    let mut out = vec![("predictions".to_string(), mrp), ("report".to_string(), report.to_json().into_bytes())];
    for sub in ["run", "model"] {
        let mut files: Vec<_> = std::fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        for f in files.into_iter().filter(|f| f.is_file()) {
            out.push((f.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&f).unwrap()));
        }
    }
    out
}

/// Two runs with one seed, and a third with a thread pool, give identical
/// bytes.
pub fn determinism() -> Result<String, String> {
    let runs: Vec<_> = [1, 1, 2]
        .into_iter()
        .map(|jobs| {
            let dir = tempfile::tempdir().unwrap();
            pipeline_bytes(dir.path(), jobs)
        })
        .collect();
    for (k, r) in runs.iter().enumerate().skip(1) {
        if r.len() != runs[0].len() {
            return Err(format!("run {k} wrote {} files, run 0 wrote {}", r.len(), runs[0].len()));
        }
        for ((name, a), (other, b)) in runs[0].iter().zip(r) {
            if name != other || a != b {
                return Err(format!("run {k}: {name} differs"));
            }
        }
    }
    Ok(format!("{} artifacts identical across 3 runs", runs[0].len()))
}
