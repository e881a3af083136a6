mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unimrp::trainer::{derive_seed, split_dataset, EarlyStopper, Goal, SplitConfig, TrainConfig};
use unimrp::{synthetic, Corpus, Framework};

const ALL: [Framework; 5] = [Framework::Dm, Framework::Psd, Framework::Eds, Framework::Ucca, Framework::Amr];

#[test]
fn multitask_loss_is_the_masked_weighted_sum() {
    common::checks::loss_algebra().unwrap();
}

#[test]
fn identical_members_predict_like_one() {
    common::checks::identical_members().unwrap();
}

#[test]
fn greedy_selection_stops_at_the_first_non_improving_member() {
    common::checks::greedy_selection().unwrap();
}

/// A corpus where each sentence keeps a random non-empty subset of its
/// graphs.
fn ragged_corpus(rng: &mut ChaCha8Rng, n: usize) -> Corpus {
    let mut c = synthetic::corpus(n, rng.random());
    for s in &mut c.sentences {
        let keep: Vec<Framework> = ALL.iter().copied().filter(|_| rng.random_bool(0.6)).collect();
        let keep = if keep.is_empty() { vec![ALL[rng.random_range(0..5)]] } else { keep };
        s.graphs.retain(|fw, _| keep.contains(fw));
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn splits_partition_the_corpus(seed in any::<u64>(), n in 1usize..40, a in 0usize..6, b in 0usize..6, share in 0.1f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = ragged_corpus(&mut rng, n);
        let cfg = SplitConfig { dm: (a, b), psd: (b, a), eds: (a, a), ucca: (b, b), amr: (a + 1, b), max_share: share };
        let split = split_dataset(&c, &cfg, 1.0, seed).unwrap();
        // Every sentence lands in exactly one part.
        let mut parts: BTreeMap<&str, usize> = BTreeMap::new();
        for id in split.train.iter().chain(split.validation_i.values().flatten()).chain(split.validation_ii.values().flatten()) {
            *parts.entry(id.as_str()).or_default() += 1;
        }
        prop_assert_eq!(parts.len(), c.sentences.len());
        prop_assert!(parts.values().all(|&k| k == 1));
        let graphs: BTreeMap<&str, usize> = c.sentences.iter().map(|s| (s.id.as_str(), s.graphs.len())).collect();
        for fw in ALL {
            let pool = c.sentences.iter().filter(|s| s.graph(fw).is_some()).count();
            let (i, ii) = cfg.sizes(fw);
            let val: Vec<&String> = split.validation_i.get(&fw).into_iter().flatten().chain(split.validation_ii.get(&fw).into_iter().flatten()).collect();
            // Validation sentences carry the framework and never exceed the
            // requested sizes or the share of its sentences.
            prop_assert!(val.len() <= i + ii);
            if i + ii > (pool as f64 * share).floor() as usize {
                prop_assert!(val.len() <= (pool as f64 * share).floor() as usize);
            }
            for id in &val {
                let s = c.sentences.iter().find(|s| &s.id == *id).unwrap();
                prop_assert!(s.graph(fw).is_some());
            }
            // Sentences with fewer frameworks are preferred over those left
            // in training.
            let most = val.iter().map(|id| graphs[id.as_str()]).max();
            let least_train = split.train.iter().filter(|id| c.sentences.iter().any(|s| &s.id == *id && s.graph(fw).is_some())).map(|id| graphs[id.as_str()]).min();
            if let (Some(m), Some(l)) = (most, least_train) {
                prop_assert!(m <= l, "{}: validation has {} frameworks, training {}", fw.as_str(), m, l);
            }
        }
    }
}

#[test]
fn oversized_requests_shrink_proportionally() {
    // Single-framework sentences so nothing is shared between frameworks.
    let mut c = synthetic::corpus(20, 3);
    for s in &mut c.sentences {
        s.graphs.retain(|fw, _| *fw == Framework::Dm);
    }
    let cfg = SplitConfig {
        dm: (6, 18),
        max_share: 0.5,
        ..SplitConfig::default()
    };
    let split = split_dataset(&c, &cfg, 1.0, 1).unwrap();
    // Budget 10 of 24 requested: floor(6·10/24) = 2, floor(18·10/24) = 7.
    assert_eq!(split.validation_i[&Framework::Dm].len(), 2);
    assert_eq!(split.validation_ii[&Framework::Dm].len(), 7);
    assert_eq!(split.train.len(), 11);
    let scaled = split_dataset(&c, &cfg, 0.25, 1).unwrap();
    assert_eq!(scaled.validation_i[&Framework::Dm].len() + scaled.validation_ii[&Framework::Dm].len(), 2 + 5);
}

#[test]
fn splits_depend_only_on_the_seed() {
    let c = synthetic::corpus(30, 2);
    let cfg = SplitConfig {
        dm: (2, 3),
        psd: (2, 3),
        eds: (2, 3),
        ucca: (1, 2),
        amr: (2, 2),
        max_share: 0.5,
    };
    assert_eq!(split_dataset(&c, &cfg, 1.0, 4).unwrap(), split_dataset(&c, &cfg, 1.0, 4).unwrap());
    assert_ne!(split_dataset(&c, &cfg, 1.0, 4).unwrap(), split_dataset(&c, &cfg, 1.0, 5).unwrap());
    assert!(split_dataset(&c, &cfg, 0.0, 4).is_err());
}

#[test]
fn early_stopping_keeps_the_first_strict_best() {
    let mut up = EarlyStopper::new(Goal::Maximize);
    let seq = [0.3, 0.5, f64::NAN, 0.5, 0.4, 0.7, 0.7];
    let better: Vec<bool> = seq.iter().enumerate().map(|(e, &v)| up.observe(e + 1, v)).collect();
    assert_eq!(better, [true, true, false, false, false, true, false]);
    assert_eq!(up.best_epoch(), Some(6));
    assert_eq!(up.history.len(), seq.len());

    let mut down = EarlyStopper::new(Goal::Minimize);
    for (e, v) in [f64::INFINITY, 2.0, 1.0, 1.5].into_iter().enumerate() {
        down.observe(e + 1, v);
    }
    assert_eq!(down.best, Some((3, 1.0)));
}

#[test]
fn derived_seeds_are_distinct() {
    let mut seen = BTreeSet::new();
    for a in 0..20u64 {
        for b in 0..20u64 {
            assert!(seen.insert(derive_seed(7, &[a, b])));
        }
    }
    assert_ne!(derive_seed(7, &[]), derive_seed(8, &[]));
}

#[test]
fn configs_round_trip_and_reject_bad_values() {
    let cfg = TrainConfig::multitask();
    assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let mut bad = TrainConfig::default();
    bad.model.amr.weights.biaf = 0.8;
    assert!(TrainConfig::from_toml(&bad.to_toml()).is_err());
    let mut bad = TrainConfig::default();
    bad.scale = -1.0;
    assert!(bad.validate().is_err());
}

#[test]
fn psd_can_share_the_dm_mlps() {
    use unimrp::model::{ModelConfig, Parser};
    use unimrp::nn::Ctx;
    use unimrp_tensor::Tape;

    let c = synthetic::corpus(4, 1);
    let emb = synthetic::embeddings(&c, 6, 2, 6, 3);
    let mut cfg = ModelConfig::small();
    let fws = [Framework::Dm, Framework::Psd];
    let (_, own) = Parser::build(&cfg, &fws, &c.sentences, &emb, 1).unwrap();
    cfg.share_sdp_mlps = true;
    let (parser, mut shared) = Parser::build(&cfg, &fws, &c.sentences, &emb, 1).unwrap();
    assert!(own.id("psd.edge_from.hidden.w").is_some());
    assert!(shared.id("psd.edge_from.hidden.w").is_none());
    assert!(shared.id("psd.u_edge").is_some());
    // The PSD loss alone reaches the DM projections once the (zero
    // initialized) bilinear weights move.
    let u = shared.id("psd.u_edge").unwrap();
    for (k, x) in shared.get_mut(u).data_mut().iter_mut().enumerate() {
        *x = ((k % 7) as f64 - 3.0) * 0.05;
    }
    let s = &c.sentences[0];
    let p = parser.prepare(s, &emb).unwrap();
    let mut tape = Tape::new(&shared);
    let l = parser.losses(&mut tape, s, &p, &emb, &[Framework::Psd], &mut Ctx::eval()).unwrap();
    let g = tape.backward(l.psd.unwrap().edge).into_params();
    let w = shared.id("dm.edge_from.hidden.w").unwrap();
    assert!(g.get(w).is_some_and(|t| t.data().iter().any(|&x| x != 0.0)));
}
