//! Random and hand-shaped graphs shared by several test targets.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unimrp::{Anchor, Framework, MrpEdge, MrpGraph, MrpNode, TokenRow};

const UCCA_LABELS: [&str; 6] = ["A", "P", "D", "C", "E", "F"];

/// A random UCCA-like graph over `n` tokens: consecutive tokens merge into
/// compound terminals, non-terminals group random (possibly discontiguous)
/// child sets until one root remains, and a few remote edges are added.
pub fn random_ucca(rng: &mut ChaCha8Rng) -> (MrpGraph, Vec<TokenRow>) {
    let n = rng.random_range(1..=10);
    let words: Vec<String> = (0..n).map(|k| format!("w{k}")).collect();
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let (input, tokens) = super::tokens(&refs);
    let mut g = MrpGraph::new(format!("u{}", rng.random::<u32>()), Framework::Ucca, input);
    let mut ids: Vec<usize> = (0..4 * n + 4).collect();
    ids.shuffle(rng);
    let mut next = ids.into_iter();
    let mut frontier = Vec::new();
    let mut k = 0;
    while k < n {
        let len = if rng.random_bool(0.25) { rng.random_range(1..=3).min(n - k) } else { 1 };
        let id = next.next().unwrap();
        let mut t = MrpNode::new(id);
        t.anchors.push(Anchor::new(tokens[k].anchor.from, tokens[k + len - 1].anchor.to));
        g.nodes.push(t);
        frontier.push(id);
        k += len;
    }
    let mut nonterminals = Vec::new();
    loop {
        let take = if frontier.len() == 1 { 1 } else { rng.random_range(1..=frontier.len().min(3)) };
        frontier.shuffle(rng);
        let kids: Vec<usize> = frontier.drain(..take).collect();
        let id = next.next().unwrap();
        g.nodes.push(MrpNode::new(id));
        for c in kids {
            g.edges.push(MrpEdge::new(id, c, UCCA_LABELS[rng.random_range(0..UCCA_LABELS.len())]));
        }
        nonterminals.push(id);
        frontier.push(id);
        if frontier.len() == 1 && (nonterminals.len() > 1 || rng.random_bool(0.5)) {
            break;
        }
    }
    let root = frontier[0];
    if rng.random_bool(0.5) {
        g.tops.push(root);
    }
    for _ in 0..rng.random_range(0..3) {
        let s = nonterminals[rng.random_range(0..nonterminals.len())];
        let t = g.nodes[rng.random_range(0..g.nodes.len())].id;
        if s == t || t == root || g.edges.iter().any(|e| (e.source, e.target) == (s, t) || (e.source, e.target) == (t, s)) {
            continue;
        }
        let mut e = MrpEdge::new(s, t, "A");
        e.attributes.push(("remote".into(), "true".into()));
        g.edges.push(e);
    }
    (g, tokens)
}

const NAMES: [(&str, &str); 4] = [("John", "Smith"), ("Mary", "Jones"), ("Ana", "Lopez"), ("Wei", "Chen")];
const VERBS: [(&str, &str); 4] = [("see-01", "saw"), ("eat-01", "ate"), ("hit-02", "hit"), ("visit-01", "visited")];
const MONTHS: [(&str, u32); 4] = [("January", 1), ("March", 3), ("July", 7), ("October", 10)];

struct Builder {
    g: MrpGraph,
    ids: Vec<usize>,
}

impl Builder {
    fn node(&mut self, label: &str) -> usize {
        let id = self.ids.pop().unwrap();
        self.g.nodes.push(MrpNode::labeled(id, label));
        id
    }

    fn edge(&mut self, s: usize, t: usize, l: &str) {
        self.g.edges.push(MrpEdge::new(s, t, l));
    }
}

/// A sentence and graph with a named person, a sensed predicate chain, an
/// optional date entity and a reentrant node of indegree up to three.
pub fn fixture_graph(rng: &mut ChaCha8Rng, k: usize) -> (MrpGraph, Vec<TokenRow>) {
    let (first, last) = NAMES[k % NAMES.len()];
    let (verb, verb_word) = VERBS[rng.random_range(0..VERBS.len())];
    let noun = ["boy", "girl", "dog"][rng.random_range(0..3)];
    let with_date = rng.random_bool(0.5);
    let month = rng.random_range(0..MONTHS.len());
    let day = rng.random_range(1..29).to_string();
    let mut words = vec![first, last, "wanted", "the", noun, "that", verb_word, "it"];
    if with_date {
        words.extend(["on", MONTHS[month].0, &day, "2019"]);
    }
    let (input, tokens) = super::tokens(&words);
    let mut ids: Vec<usize> = (0..40).collect();
    ids.shuffle(rng);
    let mut b = Builder {
        g: MrpGraph::new(format!("amr{k}"), Framework::Amr, input),
        ids,
    };
    let want = b.node("want-01");
    b.g.tops.push(want);
    let person = b.node("person");
    let name = b.node("name");
    b.g.node_mut(name).unwrap().set_property("op1", first);
    b.g.node_mut(name).unwrap().set_property("op2", last);
    b.edge(person, name, "name");
    b.edge(want, person, "ARG0");
    let pred = b.node(verb);
    b.edge(want, pred, "ARG1");
    let thing = b.node(noun);
    b.edge(pred, thing, "ARG1");
    // Reentrancies into `person` and `thing`.
    let extra = rng.random_range(1..=2);
    b.edge(pred, person, "ARG0");
    if extra == 2 {
        let think = b.node("think-01");
        b.edge(pred, think, "purpose");
        b.edge(think, person, "ARG0");
        b.edge(think, thing, "ARG1");
        if rng.random_bool(0.5) {
            let q = b.node("quick");
            b.edge(think, q, "manner");
            b.g.node_mut(q).unwrap().set_property("polarity", "-");
        }
    }
    if with_date {
        let date = b.node("date-entity");
        let n = b.g.node_mut(date).unwrap();
        n.set_property("month", MONTHS[month].1.to_string());
        n.set_property("day", day.clone());
        n.set_property("year", "2019");
        b.edge(pred, date, "time");
    }
    (b.g, tokens)
}

pub fn amr_fixture() -> Vec<(MrpGraph, Vec<TokenRow>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    (0..50).map(|k| fixture_graph(&mut rng, k)).collect()
}

/// A random rooted DAG: node k > 0 takes 1 to 3 parents among earlier nodes.
pub fn random_dag(rng: &mut ChaCha8Rng) -> MrpGraph {
    let n = rng.random_range(1..=12);
    let mut ids: Vec<usize> = (0..3 * n).collect();
    ids.shuffle(rng);
    let mut g = MrpGraph::new("dag", Framework::Amr, "");
    for &id in &ids[..n] {
        g.nodes.push(MrpNode::labeled(id, ["a", "b", "c"][rng.random_range(0..3)]));
    }
    g.tops.push(ids[0]);
    for k in 1..n {
        let mut parents: Vec<usize> = (0..k).collect();
        parents.shuffle(rng);
        for &p in parents.iter().take(rng.random_range(1..=3)) {
            g.edges.push(MrpEdge::new(ids[p], ids[k], *["ARG0", "ARG1", "mod"].choose(rng).unwrap()));
        }
    }
    g
}

pub fn amr_pair(rng: &mut ChaCha8Rng) -> (MrpGraph, MrpGraph) {
    let n = rng.random_range(2..=8);
    let mut g = super::random_graph(rng, Framework::Amr, n, false);
    for e in &mut g.edges {
        e.attributes.clear();
    }
    let mut seen = std::collections::HashSet::new();
    g.edges.retain(|e| seen.insert((e.source, e.target)));
    let mut p = super::perturb(rng, &g);
    if rng.random_bool(0.3) {
        let id = p.next_id();
        p.nodes.push(MrpNode::labeled(id, super::LABELS[rng.random_range(0..4)]));
    }
    let mut seen = std::collections::HashSet::new();
    p.edges.retain(|e| seen.insert((e.source, e.target)));
    (g, p)
}

