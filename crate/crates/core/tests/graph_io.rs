mod common;

use std::io::Cursor;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unimrp::graph::{
    align_ucca_tokens, graph_to_json, parse_graph, read_companion, read_mrp, validate_graph, write_companion,
    write_mrp, UccaAlignment,
};
use unimrp::{synthetic, Anchor, Framework, MrpEdge, MrpGraph, MrpNode};

const FRAMEWORKS: [Framework; 5] = [Framework::Dm, Framework::Psd, Framework::Eds, Framework::Ucca, Framework::Amr];

proptest! {
    #[test]
    fn json_round_trip(seed in any::<u64>(), n in 0usize..10, fw in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_graph(&mut rng, FRAMEWORKS[fw], n, true);
        prop_assert!(validate_graph(&g).is_empty());
        let back = parse_graph(&graph_to_json(&g)).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn file_round_trip(seed in any::<u64>(), k in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graphs: Vec<MrpGraph> = (0..k).map(|i| common::random_graph(&mut rng, FRAMEWORKS[i % 5], i + 1, true)).collect();
        let mut buf = Vec::new();
        write_mrp(&graphs, &mut buf).unwrap();
        prop_assert_eq!(read_mrp(Cursor::new(&buf)).unwrap(), graphs);
    }
}

#[test]
fn reads_standard_fields() {
    let line = r#"{"id": "20001001", "flavor": 0, "framework": "dm", "version": 1.0, "time": "2019-04-10", "input": "Pierre Vinken", "tops": [1], "nodes": [{"id": 0, "label": "Pierre", "properties": ["pos"], "values": ["NNP"], "anchors": [{"from": 0, "to": 6}]}, {"id": 1, "label": "Vinken", "anchors": [{"from": 7, "to": 13}]}], "edges": [{"source": 1, "target": 0, "label": "compound"}]}"#;
    let g = parse_graph(line).unwrap();
    assert_eq!(g.framework, Framework::Dm);
    assert_eq!(g.tops, vec![1]);
    assert_eq!(g.nodes[0].property("pos"), Some("NNP"));
    assert_eq!(g.edges[0].label.as_deref(), Some("compound"));
    let remote = r#"{"id": "u", "flavor": 1, "framework": "ucca", "input": "", "nodes": [{"id": 0}, {"id": 1}], "edges": [{"source": 0, "target": 1, "label": "A", "attributes": ["remote"], "values": [true]}]}"#;
    assert!(parse_graph(remote).unwrap().edges[0].is_remote());
}

#[test]
fn invalid_graphs_are_rejected_with_line_numbers() {
    let mut g = MrpGraph::new("bad", Framework::Psd, "ab");
    g.nodes.push(MrpNode::new(0));
    g.edges.push(MrpEdge::new(0, 5, "x"));
    let v = validate_graph(&g);
    assert_eq!(v.len(), 1, "{v:?}");
    assert!(v[0].contains("missing node 5"));
    let mut buf = b"\n".to_vec();
    write_mrp([&g], &mut buf).unwrap();
    let err = read_mrp(Cursor::new(buf)).unwrap_err().to_string();
    assert!(err.contains("bad") && err.contains("line 2"), "{err}");

    let mut g = MrpGraph::new("anchors", Framework::Dm, "ab");
    let mut n = MrpNode::new(0);
    n.anchors.push(Anchor::new(1, 5));
    g.nodes.push(n);
    g.tops.push(3);
    g.flavor = 1;
    assert_eq!(validate_graph(&g).len(), 3);

    assert!(read_mrp(Cursor::new(b"{not json}\n".to_vec())).is_err());
}

#[test]
fn companion_round_trip() {
    let corpus = synthetic::corpus(5, 1);
    let companion = corpus.companion();
    let mut buf = Vec::new();
    write_companion(&companion, &mut buf).unwrap();
    let back = read_companion(Cursor::new(buf)).unwrap();
    assert_eq!(back, companion);
}

#[test]
fn ucca_terminals_align_to_tokens() {
    let corpus = synthetic::corpus(20, 4);
    for s in &corpus.sentences {
        let g = s.graph(Framework::Ucca).unwrap();
        let UccaAlignment::Aligned(spans) = align_ucca_tokens(g, &s.tokens) else {
            panic!("{} not aligned", s.id)
        };
        let covered: usize = spans.iter().map(|sp| sp.end - sp.start).sum();
        assert_eq!(covered, s.tokens.len(), "{}", s.id);
    }
    // A terminal ending inside a token is flagged.
    let s = &corpus.sentences[0];
    let mut g = s.graph(Framework::Ucca).unwrap().clone();
    let t = g.nodes.iter_mut().find(|n| !n.anchors.is_empty()).unwrap();
    t.anchors[0].to -= 1;
    if t.anchors[0].to > t.anchors[0].from {
        assert!(matches!(align_ucca_tokens(&g, &s.tokens), UccaAlignment::Discrepant(_)));
    }
}
