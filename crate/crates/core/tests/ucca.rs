mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unimrp::ucca::{deserialize_ucca, serialize_ucca, state_order, voting_ensemble, StateKind, UccaPrediction, CT};
use unimrp::{synthetic, Anchor, Framework, MrpEdge, MrpGraph, MrpNode, TokenRow};


fn round_trip(g: &MrpGraph, tokens: &[TokenRow]) -> MrpGraph {
    let s = serialize_ucca(g, tokens).unwrap();
    deserialize_ucca(&g.id, &g.input, tokens, &s.pointers, &s.edges, &s.remote)
}

#[test]
fn serialization_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut failures = Vec::new();
    for k in 0..1000 {
        let (mut g, tokens) = common::fixtures::random_ucca(&mut rng);
        let back = round_trip(&g, &tokens);
        // The rebuilt graph always marks its root as the top.
        if g.tops.is_empty() {
            let with_parent: Vec<usize> = g.edges.iter().filter(|e| !e.is_remote()).map(|e| e.target).collect();
            g.tops = g.nodes.iter().map(|n| n.id).filter(|i| !with_parent.contains(i)).collect();
        }
        if !common::isomorphic(&g, &back) {
            failures.push(k);
        }
    }
    assert!(failures.is_empty(), "{} of 1000 failed, first {:?}", failures.len(), &failures[..failures.len().min(5)]);
}

#[test]
fn the_comparison_notices_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let (g, _) = common::fixtures::random_ucca(&mut rng);
        let mut relabeled = g.clone();
        relabeled.edges[0].label = Some("Z".into());
        assert!(!common::isomorphic(&g, &relabeled));
        let mut moved = g.clone();
        let t = moved.nodes.iter_mut().find(|n| !n.anchors.is_empty()).unwrap();
        t.anchors[0].to += 100;
        assert!(!common::isomorphic(&g, &moved));
    }
}

#[test]
fn compound_terminals_get_ct_edges() {
    // One terminal over three tokens under a single non-terminal.
    let (input, tokens) = common::tokens(&["New", "York", "City"]);
    let mut g = MrpGraph::new("c", Framework::Ucca, input);
    let mut t = MrpNode::new(1);
    t.anchors.push(Anchor::new(0, tokens[2].anchor.to));
    g.nodes = vec![MrpNode::new(0), t];
    g.edges = vec![MrpEdge::new(0, 1, "C")];
    g.tops = vec![0];
    let s = serialize_ucca(&g, &tokens).unwrap();
    assert_eq!(s.pointers, vec![0]);
    assert_eq!(s.states, vec![StateKind::Root, StateKind::Token(0), StateKind::Token(1), StateKind::Token(2)]);
    let ct: Vec<_> = s.edges.iter().filter(|e| e.2 == CT).map(|e| (e.0, e.1)).collect();
    assert_eq!(ct, vec![(1, 2), (1, 3)]);
    let back = deserialize_ucca("c", &g.input, &tokens, &s.pointers, &s.edges, &s.remote);
    assert!(common::isomorphic(&g, &back));
}

#[test]
fn pointers_sort_by_first_token_then_depth() {
    let corpus = synthetic::corpus(10, 5);
    for s in &corpus.sentences {
        let u = serialize_ucca(s.graph(Framework::Ucca).unwrap(), &s.tokens).unwrap();
        assert_eq!(*u.pointers.last().unwrap(), 0);
        let body = &u.pointers[..u.pointers.len() - 1];
        assert!(body.windows(2).all(|w| w[0] <= w[1]), "{:?}", u.pointers);
        assert_eq!(u.states, state_order(body, s.tokens.len()));
        let back = round_trip(s.graph(Framework::Ucca).unwrap(), &s.tokens);
        assert!(common::isomorphic(s.graph(Framework::Ucca).unwrap(), &back), "{}", s.id);
    }
}

#[test]
fn misaligned_graphs_are_rejected() {
    let (input, tokens) = common::tokens(&["ab", "cd"]);
    let mut g = MrpGraph::new("m", Framework::Ucca, input);
    let mut t = MrpNode::new(1);
    t.anchors.push(Anchor::new(1, 2));
    g.nodes = vec![MrpNode::new(0), t];
    g.edges = vec![MrpEdge::new(0, 1, "C")];
    assert!(serialize_ucca(&g, &tokens).is_err());
}

fn prediction(pointers: Vec<usize>, edge_p: f64) -> UccaPrediction {
    let body: Vec<usize> = pointers.iter().copied().filter(|&p| p != 0).collect();
    let n = state_order(&body, 3).len();
    let mut edge = unimrp_tensor::Tensor::zeros(n, n);
    edge.set(0, 1, edge_p);
    UccaPrediction {
        pointers,
        scores: unimrp::biaffine::EdgeScores {
            edge,
            labels: unimrp_tensor::Tensor::full(n * n, 2, 0.5),
        },
        remote: unimrp_tensor::Tensor::zeros(n, n),
        truncated: false,
    }
}

#[test]
fn vote_takes_the_majority_sequence() {
    let a = prediction(vec![1, 0], 0.9);
    let b = prediction(vec![1, 2, 0], 0.2);
    let c = prediction(vec![1, 0], 0.7);
    let v = voting_ensemble(&[a, b, c]).unwrap();
    assert_eq!(v.pointers, vec![1, 0]);
    assert!((v.scores.edge.get(0, 1) - 0.8).abs() < 1e-12);
}
