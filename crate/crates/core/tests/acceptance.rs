//! One PASS/FAIL line per acceptance criterion; exits non-zero on any
//! failure.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unimrp::amr::cle::{chu_liu_edmonds, tree_score};
use unimrp::amr::{dag_to_tree, postprocess_amr, preprocess, SenseTable};
use unimrp::biaffine::{decode_flavor0, EdgeScores, Flavor0Decode};
use unimrp::evaluator::{correspond, mrp_f1, EvalOptions, Search, COMPONENTS};
use unimrp::ucca::{deserialize_ucca, serialize_ucca, state_order, voting_ensemble, UccaPrediction};
use unimrp::{Anchor, Framework, MrpEdge, MrpGraph, MrpNode};
use unimrp_tensor::Tensor;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradients() -> Outcome {
    let setup = common::grad::setup();
    let comps = common::grad::components();
    let mut instances = 0;
    for c in &comps {
        instances += common::grad::check(&setup, c)?;
    }
    Ok(format!("{} components, {instances} instances, tolerance {:.0e}", comps.len(), common::grad::TOL))
}

fn cle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for k in 0..200 {
        let n = rng.random_range(2..=6);
        let s: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(-40i32..40) as f64 * 0.25).collect())
            .collect();
        let root = rng.random_range(0..n);
        let heads = chu_liu_edmonds(&s, root).map_err(|e| e.to_string())?;
        let got = tree_score(&s, &heads);
        let best = common::brute_force_arborescence(&s, root);
        ensure(got == best, || format!("matrix {k}: {got} vs optimum {best}"))?;
    }
    Ok("200 matrices".into())
}

fn ucca_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for k in 0..1000 {
        let (mut g, tokens) = common::fixtures::random_ucca(&mut rng);
        let s = serialize_ucca(&g, &tokens).map_err(|e| format!("graph {k}: {e}"))?;
        let back = deserialize_ucca(&g.id, &g.input, &tokens, &s.pointers, &s.edges, &s.remote);
        if g.tops.is_empty() {
            let with_parent: Vec<usize> = g.edges.iter().filter(|e| !e.is_remote()).map(|e| e.target).collect();
            g.tops = g.nodes.iter().map(|n| n.id).filter(|i| !with_parent.contains(i)).collect();
        }
        ensure(common::isomorphic(&g, &back), || format!("graph {k} changed"))?;
    }
    Ok("1000 graphs".into())
}

fn amr_transforms() -> Outcome {
    let fixture = common::fixtures::amr_fixture();
    let senses = SenseTable::from_graphs(fixture.iter().map(|(g, _)| g));
    for (g, tokens) in &fixture {
        let p = preprocess(g, tokens).map_err(|e| e.to_string())?;
        let back = postprocess_amr(&g.id, &g.input, &p.tree.decoded(), &p.tree.edges(), &p.record, &senses);
        ensure(common::isomorphic(g, &back), || format!("{} changed", g.id))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for k in 0..500 {
        let g = common::fixtures::random_dag(&mut rng);
        let tree = dag_to_tree(&g, &BTreeMap::new()).map_err(|e| e.to_string())?;
        let mut indeg: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &g.edges {
            *indeg.entry(e.target).or_default() += 1;
        }
        let expected = g.nodes.len() + indeg.values().map(|d| d - 1).sum::<usize>();
        ensure(tree.nodes.len() == expected, || format!("dag {k}: {} tree nodes, expected {expected}", tree.nodes.len()))?;
    }
    Ok(format!("{} fixture graphs, 500 DAGs", fixture.len()))
}

fn overfit() -> Outcome {
    let (reached, best) = common::overfit::sdp(200, 0.99);
    let epoch = reached.ok_or_else(|| format!("SDP labeled F1 peaked at {best:?}"))?;
    let (exact, f1) = common::overfit::ucca(100);
    let n = common::overfit::SENTENCES;
    ensure(exact == n && f1 >= 0.95, || format!("UCCA: {exact}/{n} pointer sequences, edge F1 {f1:.4}"))?;
    let amr = common::overfit::amr(200);
    ensure(amr >= 30, || format!("AMR: {amr}/{n} node sequences"))?;
    Ok(format!(
        "SDP F1 ≥ 0.99 at epoch {epoch}; UCCA {exact}/{n} pointers, edge F1 {f1:.3}; AMR {amr}/{n} sequences"
    ))
}

fn scores(edge: Vec<Vec<f64>>, label: impl Fn(usize, usize) -> usize) -> EdgeScores {
    let n = edge.len();
    let mut labels = Tensor::zeros(n * n, 3);
    for i in 0..n {
        for j in 0..n {
            for c in 0..3 {
                labels.set(i * n + j, c, if c == label(i, j) { 0.8 } else { 0.1 });
            }
        }
    }
    EdgeScores {
        edge: Tensor::from_rows(&edge).unwrap(),
        labels,
    }
}

fn decoding() -> Outcome {
    let mut e = vec![vec![0.0; 3]; 3];
    e[1][2] = 0.6;
    e[2][1] = 0.5;
    let d = decode_flavor0(&scores(e, |_, _| 2));
    ensure(d == Flavor0Decode { edges: vec![(1, 2, 2)], tops: vec![], nodes: vec![1, 2] }, || format!("threshold case {d:?}"))?;
    let mut e = vec![vec![0.0; 4]; 4];
    (e[0][1], e[0][3], e[0][2]) = (0.7, 0.8, 0.5);
    let d = decode_flavor0(&scores(e, |_, _| 0));
    ensure(d.tops == [1, 3] && d.edges.is_empty(), || format!("tops case {d:?}"))?;
    let mut e = vec![vec![0.1; 5]; 5];
    (e[0][4], e[1][2], e[3][3]) = (0.9, 0.95, 0.99);
    let d = decode_flavor0(&scores(e, |i, j| (i + j) % 3));
    ensure(d == Flavor0Decode { edges: vec![(1, 2, 0)], tops: vec![4], nodes: vec![1, 2, 4] }, || format!("pruning case {d:?}"))?;
    Ok("3 examples".into())
}

fn ucca_vote() -> Result<(), String> {
    let pred = |pointers: Vec<usize>| {
        let body: Vec<usize> = pointers.iter().copied().filter(|&p| p != 0).collect();
        let n = state_order(&body, 3).len();
        UccaPrediction {
            pointers,
            truncated: false,
            scores: EdgeScores {
                edge: Tensor::zeros(n, n),
                labels: Tensor::full(n * n, 2, 0.5),
            },
            remote: Tensor::zeros(n, n),
        }
    };
    let v = voting_ensemble(&[pred(vec![1, 2, 0]), pred(vec![1, 0]), pred(vec![1, 0])]).map_err(|e| e.to_string())?;
    ensure(v.pointers == [1, 0], || format!("vote chose {:?}", v.pointers))
}

fn ensembling() -> Outcome {
    let same = common::checks::identical_members()?;
    ucca_vote()?;
    common::checks::greedy_selection()?;
    Ok(format!("{same}; vote picks the majority; greedy stops at the first non-improving member"))
}

fn evaluator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let fws = [Framework::Dm, Framework::Psd, Framework::Eds, Framework::Ucca, Framework::Amr];
    for k in 0..100 {
        let fw = fws[k % 5];
        let g = common::random_graph(&mut rng, fw, 1 + k % 10, fw != Framework::Amr);
        let s = mrp_f1(&g, &g).map_err(|e| e.to_string())?;
        ensure(COMPONENTS.iter().all(|c| s.component(c).f1 == 1.0) && s.all.f1 == 1.0, || format!("graph {k} scores below 1"))?;
    }
    let mut gold = MrpGraph::new("t", Framework::Dm, "a b c d");
    for k in 0..4 {
        let mut n = MrpNode::labeled(k, format!("w{k}"));
        n.anchors.push(Anchor::new(2 * k, 2 * k + 1));
        gold.nodes.push(n);
    }
    gold.edges = vec![MrpEdge::new(0, 1, "ARG1"), MrpEdge::new(1, 2, "ARG2"), MrpEdge::new(2, 3, "BV")];
    let mut pred = gold.clone();
    pred.edges.remove(1);
    let e = mrp_f1(&gold, &pred).map_err(|e| e.to_string())?.component("edges").clone();
    ensure(e.precision == 1.0 && e.recall == 2.0 / 3.0 && (e.f1 - 0.8).abs() < 1e-15, || format!("2/3 case {e:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..100 {
        let (g, p) = common::fixtures::amr_pair(&mut rng);
        let oracle = common::brute_force_match(&g, &p);
        let hc = correspond(&g, &p, EvalOptions { search: Search::HillClimb { restarts: 20, seed: 7 }, ..Default::default() })
            .map_err(|e| e.to_string())?;
        ensure(hc.score == oracle, || format!("pair {k}: hill climbing {} vs exhaustive {oracle}", hc.score))?;
    }
    Ok("identity, 2/3 edges, 100 hill-climbing pairs".into())
}

type Check = (usize, &'static str, fn() -> Outcome, Duration);

fn main() {
    let checks: [Check; 10] = [
        (1, "gradient correctness", gradients, Duration::from_secs(120)),
        (2, "maximum spanning tree oracle", cle, Duration::from_secs(30)),
        (3, "UCCA serialization round trip", ucca_round_trip, Duration::MAX),
        (4, "AMR pre/postprocessing and replication", amr_transforms, Duration::MAX),
        (5, "overfitting 32 sentences", overfit, Duration::from_secs(900)),
        (6, "multitask loss algebra", common::checks::loss_algebra, Duration::MAX),
        (7, "flavor-0 decoding", decoding, Duration::MAX),
        (8, "ensembling", ensembling, Duration::MAX),
        (9, "evaluator", evaluator, Duration::MAX),
        (10, "determinism", common::checks::determinism, Duration::MAX),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (k, name, check, limit) in checks {
        if filter.as_deref().is_some_and(|f| !name.contains(f) && f != k.to_string()) {
            continue;
        }
        let t = Instant::now();
        let out = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = t.elapsed();
        let out = out.and_then(|m| {
            if took > limit {
                Err(format!("{m}; took {took:.1?}, limit {limit:.0?}"))
            } else {
                Ok(m)
            }
        });
        match out {
            Ok(m) => println!("PASS {k:>2} {name}: {m} ({took:.1?})"),
            Err(m) => {
                failed += 1;
                println!("FAIL {k:>2} {name}: {m} ({took:.1?})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
