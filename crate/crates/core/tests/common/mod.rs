#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use unimrp::{Anchor, Framework, MrpEdge, MrpGraph, MrpNode};

pub mod checks;
pub mod fixtures;
pub mod grad;
pub mod overfit;

pub const LABELS: [&str; 4] = ["a", "b", "c", "d"];
pub const EDGE_LABELS: [&str; 3] = ["x", "y", "z"];

/// A random graph over `n` nodes with ids scrambled, optional properties,
/// anchors (inside `input`) and edge attributes.
pub fn random_graph(rng: &mut ChaCha8Rng, fw: Framework, n: usize, anchored: bool) -> MrpGraph {
    let input: String = (0..3 * n.max(1)).map(|k| if k % 3 == 2 { ' ' } else { 'w' }).collect();
    let mut g = MrpGraph::new(format!("g{}", rng.random::<u32>()), fw, input);
    let mut ids: Vec<usize> = (0..n).map(|k| k * 3 + rng.random_range(0..3)).collect();
    ids.shuffle(rng);
    for &id in &ids {
        let mut node = MrpNode::labeled(id, LABELS[rng.random_range(0..LABELS.len())]);
        if rng.random_bool(0.3) {
            node.set_property("p", ["1", "2"][rng.random_range(0..2)]);
        }
        if anchored && rng.random_bool(0.7) {
            let k = rng.random_range(0..n);
            node.anchors.push(Anchor::new(3 * k, 3 * k + 2));
        }
        g.nodes.push(node);
    }
    for &id in &ids {
        if rng.random_bool(0.3) {
            g.tops.push(id);
        }
    }
    if n > 1 {
        for _ in 0..rng.random_range(0..2 * n) {
            let s = ids[rng.random_range(0..n)];
            let t = ids[rng.random_range(0..n)];
            if s == t {
                continue;
            }
            let mut e = MrpEdge::new(s, t, EDGE_LABELS[rng.random_range(0..EDGE_LABELS.len())]);
            if rng.random_bool(0.2) {
                e.attributes.push(("remote".into(), "true".into()));
            }
            g.edges.push(e);
        }
    }
    g
}

/// `g` with labels, tops and edges randomly perturbed and ids renumbered.
pub fn perturb(rng: &mut ChaCha8Rng, g: &MrpGraph) -> MrpGraph {
    let mut p = g.clone();
    for n in &mut p.nodes {
        if rng.random_bool(0.25) {
            n.label = Some(LABELS[rng.random_range(0..LABELS.len())].into());
        }
    }
    p.edges.retain(|_| rng.random_bool(0.8));
    let ids: Vec<usize> = p.nodes.iter().map(|n| n.id).collect();
    if ids.len() > 1 && rng.random_bool(0.5) {
        let s = ids[rng.random_range(0..ids.len())];
        let t = ids[rng.random_range(0..ids.len())];
        if s != t {
            p.edges.push(MrpEdge::new(s, t, EDGE_LABELS[rng.random_range(0..EDGE_LABELS.len())]));
        }
    }
    if rng.random_bool(0.3) && !ids.is_empty() {
        p.tops = vec![ids[rng.random_range(0..ids.len())]];
    }
    // Fresh ids in a shuffled order.
    let mut fresh: Vec<usize> = (100..100 + ids.len()).collect();
    fresh.shuffle(rng);
    let remap = |id: usize| fresh[ids.iter().position(|&x| x == id).unwrap()];
    for n in &mut p.nodes {
        n.id = remap(n.id);
    }
    for e in &mut p.edges {
        e.source = remap(e.source);
        e.target = remap(e.target);
    }
    p.tops = p.tops.iter().map(|&t| remap(t)).collect();
    p.nodes.shuffle(rng);
    p
}

/// Best matched-tuple total over all node correspondences, by enumerating
/// every permutation of `max(|gold|, |pred|)` slots. Edges pair up as
/// multisets of `(source, target, label)`; attributes are not counted.
pub fn brute_force_match(gold: &MrpGraph, pred: &MrpGraph) -> usize {
    let slots = gold.nodes.len().max(pred.nodes.len());
    let mut perm: Vec<usize> = (0..slots).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| best = best.max(match_score(gold, pred, p)));
    best
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// Matched tuples when gold node `i` (by position) maps to pred node
/// `perm[i]`, if that position exists.
pub fn match_score(gold: &MrpGraph, pred: &MrpGraph, perm: &[usize]) -> usize {
    let mapped = |i: usize| perm.get(i).copied().filter(|&j| j < pred.nodes.len());
    let mut total = 0;
    for (i, g) in gold.nodes.iter().enumerate() {
        let Some(j) = mapped(i) else { continue };
        let p = &pred.nodes[j];
        total += (gold.tops.contains(&g.id) && pred.tops.contains(&p.id)) as usize;
        total += (g.label.is_some() && g.label == p.label) as usize;
        total += g.properties.iter().filter(|kv| p.properties.contains(kv)).count();
        let norm = |a: &[Anchor]| {
            let mut v = a.to_vec();
            v.sort();
            v.dedup();
            v
        };
        total += (!g.anchors.is_empty() && norm(&g.anchors) == norm(&p.anchors)) as usize;
    }
    let gpos = |id: usize| gold.nodes.iter().position(|n| n.id == id).unwrap();
    let ppos = |id: usize| pred.nodes.iter().position(|n| n.id == id).unwrap();
    let mut avail: Vec<(usize, usize, Option<&str>)> =
        pred.edges.iter().map(|e| (ppos(e.source), ppos(e.target), e.label.as_deref())).collect();
    for e in &gold.edges {
        let (Some(s), Some(t)) = (mapped(gpos(e.source)), mapped(gpos(e.target))) else { continue };
        if let Some(k) = avail.iter().position(|&x| x == (s, t, e.label.as_deref())) {
            avail.swap_remove(k);
            total += 1;
        }
    }
    total
}

/// Maximum spanning arborescence rooted at `root` by enumerating every head
/// assignment and keeping the acyclic ones.
pub fn brute_force_arborescence(scores: &[Vec<f64>], root: usize) -> f64 {
    let n = scores.len();
    let others: Vec<usize> = (0..n).filter(|&v| v != root).collect();
    let mut heads = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    fn rec(k: usize, others: &[usize], heads: &mut [usize], root: usize, scores: &[Vec<f64>], best: &mut f64) {
        let n = scores.len();
        if k == others.len() {
            for &v in others {
                let mut cur = v;
                let mut steps = 0;
                while cur != root {
                    cur = heads[cur];
                    steps += 1;
                    if steps > n {
                        return;
                    }
                }
            }
            let s: f64 = others.iter().map(|&v| scores[heads[v]][v]).sum();
            if s > *best {
                *best = s;
            }
            return;
        }
        let v = others[k];
        for h in 0..n {
            if h != v {
                heads[v] = h;
                rec(k + 1, others, heads, root, scores, best);
            }
        }
    }
    rec(0, &others, &mut heads, root, scores, &mut best);
    best
}

/// Space-separated tokens with lowercase lemmas and their input string.
pub fn tokens(words: &[&str]) -> (String, Vec<unimrp::TokenRow>) {
    let mut input = String::new();
    let mut rows = Vec::new();
    for (k, w) in words.iter().enumerate() {
        if k > 0 {
            input.push(' ');
        }
        let from = input.chars().count();
        input.push_str(w);
        rows.push(unimrp::TokenRow {
            index: k + 1,
            surface: w.to_string(),
            lemma: w.to_lowercase(),
            upos: "X".into(),
            xpos: "X".into(),
            ne: "O".into(),
            anchor: Anchor::new(from, from + w.chars().count()),
        });
    }
    (input, rows)
}

/// Isomorphism up to node ids: labels, sorted properties, anchors, tops and
/// the edge multiset with labels and attributes. Backtracking search.
pub fn isomorphic(a: &MrpGraph, b: &MrpGraph) -> bool {
    if a.nodes.len() != b.nodes.len() || a.edges.len() != b.edges.len() || a.tops.len() != b.tops.len() {
        return false;
    }
    let sig = |g: &MrpGraph, n: &MrpNode| {
        let mut p = n.properties.clone();
        p.sort();
        let mut an = n.anchors.clone();
        an.sort();
        let indeg = g.edges.iter().filter(|e| e.target == n.id).count();
        let outdeg = g.edges.iter().filter(|e| e.source == n.id).count();
        (n.label.clone(), p, an, g.tops.contains(&n.id), indeg, outdeg)
    };
    let sa: Vec<_> = a.nodes.iter().map(|n| sig(a, n)).collect();
    let sb: Vec<_> = b.nodes.iter().map(|n| sig(b, n)).collect();
    let edge_key = |e: &MrpEdge| {
        let mut at = e.attributes.clone();
        at.sort();
        (e.label.clone(), at)
    };
    let mut eb: Vec<(usize, usize, _)> = b
        .edges
        .iter()
        .map(|e| {
            let s = b.nodes.iter().position(|n| n.id == e.source).unwrap();
            let t = b.nodes.iter().position(|n| n.id == e.target).unwrap();
            (s, t, edge_key(e))
        })
        .collect();
    eb.sort();
    let ea: Vec<(usize, usize, _)> = a
        .edges
        .iter()
        .map(|e| {
            let s = a.nodes.iter().position(|n| n.id == e.source).unwrap();
            let t = a.nodes.iter().position(|n| n.id == e.target).unwrap();
            (s, t, edge_key(e))
        })
        .collect();
    type Adj<K> = std::collections::BTreeMap<(usize, usize), Vec<K>>;
    let adj = |es: &[(usize, usize, (Option<String>, Vec<(String, String)>))]| {
        let mut m: Adj<_> = Adj::new();
        for (s, t, k) in es {
            m.entry((*s, *t)).or_default().push(k.clone());
        }
        for v in m.values_mut() {
            v.sort();
        }
        m
    };
    let (aa, ab) = (adj(&ea), adj(&eb));
    // Extends `map` node by node, checking edges among mapped nodes.
    let mut map: Vec<usize> = Vec::new();
    let mut used = vec![false; b.nodes.len()];
    fn rec<S: PartialEq, K: PartialEq>(
        map: &mut Vec<usize>,
        used: &mut [bool],
        sa: &[S],
        sb: &[S],
        aa: &Adj<K>,
        ab: &Adj<K>,
    ) -> bool {
        let k = map.len();
        if k == sa.len() {
            return true;
        }
        for j in 0..sb.len() {
            if used[j] || sa[k] != sb[j] {
                continue;
            }
            map.push(j);
            let consistent = (0..=k).all(|i| {
                aa.get(&(k, i)) == ab.get(&(j, map[i])) && aa.get(&(i, k)) == ab.get(&(map[i], j))
            });
            if consistent {
                used[j] = true;
                if rec(map, used, sa, sb, aa, ab) {
                    return true;
                }
                used[j] = false;
            }
            map.pop();
        }
        false
    }
    rec(&mut map, &mut used, &sa, &sb, &aa, &ab)
}
