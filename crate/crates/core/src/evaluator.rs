//! MRP F1 (tuple matching under a node correspondence) and SDP labeled F1.
//!
//! Scores follow the shared-task metric in spirit but are produced by this
//! toolkit's own correspondence search, so they are reported as
//! "MRP-F1 (toolkit)".

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Anchor, Framework, MrpGraph};
use crate::parallel::{self, Execution};

pub const COMPONENTS: [&str; 6] = ["tops", "labels", "properties", "anchors", "edges", "attributes"];

/// Graphs at or below this size are matched exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 8;
pub const RESTARTS: usize = 20;
pub const SEARCH_SEED: u64 = 0x6d72_7066;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub pred: usize,
    pub matched: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.gold += other.gold;
        self.pred += other.pred;
        self.matched += other.matched;
    }

    pub fn score(&self) -> ComponentScore {
        let (p, r) = if self.gold == 0 && self.pred == 0 {
            // Nothing to find and nothing claimed.
            (1.0, 1.0)
        } else {
            (ratio(self.matched, self.pred), ratio(self.matched, self.gold))
        };
        ComponentScore {
            gold: self.gold,
            pred: self.pred,
            matched: self.matched,
            precision: p,
            recall: r,
            f1: f1(p, r),
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Harmonic mean with 0/0 taken as 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    pub gold: usize,
    pub pred: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Tuple counts for one graph pair, per component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GraphCounts {
    pub components: [Counts; 6],
}

impl GraphCounts {
    pub fn all(&self) -> Counts {
        let mut c = Counts::default();
        for x in &self.components {
            c.add(*x);
        }
        c
    }

    pub fn add(&mut self, other: &GraphCounts) {
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.add(*b);
        }
    }

    pub fn get(&self, name: &str) -> Counts {
        let i = COMPONENTS.iter().position(|c| *c == name).expect("known component");
        self.components[i]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameworkScore {
    pub framework: Framework,
    pub graphs: usize,
    pub components: BTreeMap<String, ComponentScore>,
    pub all: ComponentScore,
}

impl FrameworkScore {
    pub fn from_counts(framework: Framework, graphs: usize, counts: &GraphCounts) -> Self {
        FrameworkScore {
            framework,
            graphs,
            components: COMPONENTS
                .iter()
                .zip(&counts.components)
                .map(|(n, c)| (n.to_string(), c.score()))
                .collect(),
            all: counts.all().score(),
        }
    }

    pub fn component(&self, name: &str) -> &ComponentScore {
        &self.components[name]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: String,
    pub frameworks: Vec<FrameworkScore>,
    pub macro_f1: f64,
}

impl ScoreReport {
    pub fn framework(&self, fw: Framework) -> Option<&FrameworkScore> {
        self.frameworks.iter().find(|f| f.framework == fw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Plain-text table with one F1 column per component.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<6}", "");
        for c in COMPONENTS {
            let _ = write!(s, " {:>10}", capitalize(c));
        }
        let _ = writeln!(s, " {:>10}", "All");
        for f in &self.frameworks {
            let _ = write!(s, "{:<6}", f.framework.as_str().to_uppercase());
            for c in COMPONENTS {
                let _ = write!(s, " {:>10.4}", f.components[c].f1);
            }
            let _ = writeln!(s, " {:>10.4}", f.all.f1);
        }
        let _ = writeln!(s, "{} macro F1: {:.4}", self.metric, self.macro_f1);
        s
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Unweighted mean of the "all" F1 over `expected`; absent frameworks count
/// as 0 and are returned so callers can warn.
pub fn macro_average(reports: &[FrameworkScore], expected: &[Framework]) -> (f64, Vec<Framework>) {
    if expected.is_empty() {
        return (0.0, Vec::new());
    }
    let mut total = 0.0;
    let mut missing = Vec::new();
    for fw in expected {
        match reports.iter().find(|r| r.framework == *fw) {
            Some(r) => total += r.all.f1,
            None => missing.push(*fw),
        }
    }
    (total / expected.len() as f64, missing)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AnchorMode {
    #[default]
    Strict,
    /// Ranges are shrunk past leading and trailing whitespace before comparison.
    TrimWhitespace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Search {
    /// Exhaustive below the size limit, hill-climbing above it.
    Auto,
    Exhaustive,
    HillClimb { restarts: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    pub anchors: AnchorMode,
    pub search: Search,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            anchors: AnchorMode::Strict,
            search: Search::Auto,
        }
    }
}

struct Side<'a> {
    top: Vec<bool>,
    label: Vec<Option<&'a str>>,
    props: Vec<Vec<(&'a str, &'a str)>>,
    anchors: Vec<Vec<Anchor>>,
    edges: Vec<(usize, usize, Option<&'a str>, Vec<(&'a str, &'a str)>)>,
}

impl<'a> Side<'a> {
    fn new(g: &'a MrpGraph, mode: AnchorMode) -> Self {
        let index = g.index_of();
        let chars: Vec<char> = g.input.chars().collect();
        let anchors = g
            .nodes
            .iter()
            .map(|n| {
                let mut a: Vec<Anchor> = n
                    .anchors
                    .iter()
                    .filter_map(|a| normalize_anchor(*a, &chars, mode))
                    .collect();
                a.sort();
                a.dedup();
                a
            })
            .collect();
        Side {
            top: g.nodes.iter().map(|n| g.tops.contains(&n.id)).collect(),
            label: g.nodes.iter().map(|n| n.label.as_deref()).collect(),
            props: g
                .nodes
                .iter()
                .map(|n| n.properties.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect())
                .collect(),
            anchors,
            edges: g
                .edges
                .iter()
                .filter_map(|e| {
                    Some((
                        *index.get(&e.source)?,
                        *index.get(&e.target)?,
                        e.label.as_deref(),
                        e.attributes.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
                    ))
                })
                .collect(),
        }
    }

    fn len(&self) -> usize {
        self.label.len()
    }

    fn totals(&self) -> [usize; 6] {
        [
            self.top.iter().filter(|t| **t).count(),
            self.label.iter().filter(|l| l.is_some()).count(),
            self.props.iter().map(Vec::len).sum(),
            self.anchors.iter().filter(|a| !a.is_empty()).count(),
            self.edges.len(),
            self.edges.iter().map(|e| e.3.len()).sum(),
        ]
    }
}

fn normalize_anchor(a: Anchor, chars: &[char], mode: AnchorMode) -> Option<Anchor> {
    match mode {
        AnchorMode::Strict => Some(a),
        AnchorMode::TrimWhitespace => {
            let (mut from, mut to) = (a.from, a.to.min(chars.len()));
            while from < to && chars[from].is_whitespace() {
                from += 1;
            }
            while to > from && chars[to - 1].is_whitespace() {
                to -= 1;
            }
            (from < to).then_some(Anchor::new(from, to))
        }
    }
}

/// Node-level matches (tops, labels, properties, anchors) between gold node
/// `i` and predicted node `j`.
fn node_matches(g: &Side, p: &Side, i: usize, j: usize) -> [usize; 4] {
    [
        (g.top[i] && p.top[j]) as usize,
        (g.label[i].is_some() && g.label[i] == p.label[j]) as usize,
        g.props[i].iter().filter(|kv| p.props[j].contains(kv)).count(),
        (!g.anchors[i].is_empty() && g.anchors[i] == p.anchors[j]) as usize,
    ]
}

struct Matcher<'a> {
    gold: Side<'a>,
    pred: Side<'a>,
    node_score: Vec<Vec<usize>>,
    pred_edges: HashMap<(usize, usize), Vec<usize>>,
}

impl<'a> Matcher<'a> {
    fn new(gold: Side<'a>, pred: Side<'a>) -> Self {
        let node_score = (0..gold.len())
            .map(|i| {
                (0..pred.len())
                    .map(|j| node_matches(&gold, &pred, i, j).iter().sum())
                    .collect()
            })
            .collect();
        let mut pred_edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (k, e) in pred.edges.iter().enumerate() {
            pred_edges.entry((e.0, e.1)).or_default().push(k);
        }
        Matcher {
            gold,
            pred,
            node_score,
            pred_edges,
        }
    }

    /// Edge and attribute matches under `map` (gold index → pred index).
    fn edge_matches(&self, map: &[Option<usize>]) -> [usize; 2] {
        let mut used: HashMap<usize, ()> = HashMap::new();
        let (mut edges, mut attrs) = (0, 0);
        for e in &self.gold.edges {
            let (Some(s), Some(t)) = (map[e.0], map[e.1]) else {
                continue;
            };
            let Some(cands) = self.pred_edges.get(&(s, t)) else {
                continue;
            };
            let hit = cands
                .iter()
                .find(|k| !used.contains_key(k) && self.pred.edges[**k].2 == e.2);
            if let Some(&k) = hit {
                used.insert(k, ());
                edges += 1;
                attrs += e.3.iter().filter(|a| self.pred.edges[k].3.contains(a)).count();
            }
        }
        [edges, attrs]
    }

    fn total(&self, map: &[Option<usize>]) -> usize {
        let nodes: usize = map
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| self.node_score[i][j]))
            .sum();
        nodes + self.edge_matches(map).iter().sum::<usize>()
    }

    fn counts(&self, map: &[Option<usize>]) -> GraphCounts {
        let gt = self.gold.totals();
        let pt = self.pred.totals();
        let mut matched = [0usize; 6];
        for (i, j) in map.iter().enumerate() {
            if let Some(j) = *j {
                let m = node_matches(&self.gold, &self.pred, i, j);
                for k in 0..4 {
                    matched[k] += m[k];
                }
            }
        }
        let [e, a] = self.edge_matches(map);
        matched[4] = e;
        matched[5] = a;
        let mut out = GraphCounts::default();
        for k in 0..6 {
            out.components[k] = Counts {
                gold: gt[k],
                pred: pt[k],
                matched: matched[k],
            };
        }
        out
    }
}

/// The node correspondence found for a graph pair and the resulting counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Correspondence {
    /// For each gold node (by position), the matched predicted node position.
    pub map: Vec<Option<usize>>,
    /// Total matched tuples, the quantity the search maximizes.
    pub score: usize,
    pub counts: GraphCounts,
}

/// Finds a node correspondence and counts matched tuples.
pub fn correspond(gold: &MrpGraph, pred: &MrpGraph, opts: EvalOptions) -> Result<Correspondence> {
    if gold.framework != pred.framework {
        return Err(Error::model(format!(
            "graph {}: cannot compare {} with {}",
            gold.id, gold.framework, pred.framework
        )));
    }
    let m = Matcher::new(Side::new(gold, opts.anchors), Side::new(pred, opts.anchors));
    let n_gold = m.gold.len();
    let n_pred = m.pred.len();
    let mut map = vec![None; n_gold];

    // Anchored nodes whose anchor set is unique on both sides are paired
    // directly; everything else is searched.
    let mut by_anchor: HashMap<&[Anchor], (Vec<usize>, Vec<usize>)> = HashMap::new();
    for i in 0..n_gold {
        if !m.gold.anchors[i].is_empty() {
            by_anchor.entry(&m.gold.anchors[i]).or_default().0.push(i);
        }
    }
    for j in 0..n_pred {
        if !m.pred.anchors[j].is_empty() {
            by_anchor.entry(&m.pred.anchors[j]).or_default().1.push(j);
        }
    }
    let mut pred_taken = vec![false; n_pred];
    for (gs, ps) in by_anchor.values() {
        if gs.len() == 1 && ps.len() == 1 {
            map[gs[0]] = Some(ps[0]);
            pred_taken[ps[0]] = true;
        }
    }
    let free_gold: Vec<usize> = (0..n_gold).filter(|i| map[*i].is_none()).collect();
    let free_pred: Vec<usize> = (0..n_pred).filter(|j| !pred_taken[*j]).collect();

    let search = match opts.search {
        Search::Auto if free_gold.len() <= EXHAUSTIVE_LIMIT && free_pred.len() <= EXHAUSTIVE_LIMIT => {
            Search::Exhaustive
        }
        Search::Auto => Search::HillClimb {
            restarts: RESTARTS,
            seed: SEARCH_SEED,
        },
        s => s,
    };
    let slots = free_gold.len().max(free_pred.len());
    if slots > 0 {
        let best = match search {
            Search::Exhaustive => exhaustive(&m, &map, &free_gold, &free_pred, slots),
            Search::HillClimb { restarts, seed } => {
                hill_climb(&m, &map, &free_gold, &free_pred, slots, restarts, seed)
            }
            Search::Auto => unreachable!(),
        };
        apply(&mut map, &free_gold, &free_pred, &best);
    }
    let score = m.total(&map);
    let counts = m.counts(&map);
    Ok(Correspondence { map, score, counts })
}

fn apply(map: &mut [Option<usize>], free_gold: &[usize], free_pred: &[usize], perm: &[usize]) {
    for (k, &g) in free_gold.iter().enumerate() {
        map[g] = free_pred.get(perm[k]).copied();
    }
}

fn evaluate_perm(
    m: &Matcher,
    base: &[Option<usize>],
    free_gold: &[usize],
    free_pred: &[usize],
    perm: &[usize],
    scratch: &mut Vec<Option<usize>>,
) -> usize {
    scratch.clear();
    scratch.extend_from_slice(base);
    apply(scratch, free_gold, free_pred, perm);
    m.total(scratch)
}

fn exhaustive(
    m: &Matcher,
    base: &[Option<usize>],
    free_gold: &[usize],
    free_pred: &[usize],
    slots: usize,
) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..slots).collect();
    let mut scratch = Vec::new();
    let mut best = perm.clone();
    let mut best_score = evaluate_perm(m, base, free_gold, free_pred, &perm, &mut scratch);
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; slots];
    let mut i = 0;
    while i < slots {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let s = evaluate_perm(m, base, free_gold, free_pred, &perm, &mut scratch);
            if s > best_score {
                best_score = s;
                best.clone_from(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

fn hill_climb(
    m: &Matcher,
    base: &[Option<usize>],
    free_gold: &[usize],
    free_pred: &[usize],
    slots: usize,
    restarts: usize,
    seed: u64,
) -> Vec<usize> {
    let mut scratch = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vec<usize>)> = None;
    for r in 0..restarts.max(1) {
        let mut perm = if r == 0 {
            greedy_start(m, free_gold, free_pred, slots)
        } else {
            let mut p: Vec<usize> = (0..slots).collect();
            p.shuffle(&mut rng);
            p
        };
        let mut score = evaluate_perm(m, base, free_gold, free_pred, &perm, &mut scratch);
        loop {
            let mut best_move = None;
            for a in 0..slots {
                for b in a + 1..slots {
                    perm.swap(a, b);
                    let s = evaluate_perm(m, base, free_gold, free_pred, &perm, &mut scratch);
                    perm.swap(a, b);
                    if s > score && best_move.is_none_or(|(bs, _, _)| s > bs) {
                        best_move = Some((s, a, b));
                    }
                }
            }
            match best_move {
                Some((s, a, b)) => {
                    perm.swap(a, b);
                    score = s;
                }
                None => break,
            }
        }
        if best.as_ref().is_none_or(|(bs, _)| score > *bs) {
            best = Some((score, perm));
        }
    }
    best.expect("at least one restart").1
}

/// Assigns gold nodes to predicted nodes greedily by node-level score.
fn greedy_start(m: &Matcher, free_gold: &[usize], free_pred: &[usize], slots: usize) -> Vec<usize> {
    let mut pairs = Vec::new();
    for (a, &g) in free_gold.iter().enumerate() {
        for (b, &p) in free_pred.iter().enumerate() {
            pairs.push((m.node_score[g][p], a, b));
        }
    }
    pairs.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut perm = vec![usize::MAX; slots];
    let mut used = vec![false; slots];
    for (_, a, b) in pairs {
        if perm[a] == usize::MAX && !used[b] {
            perm[a] = b;
            used[b] = true;
        }
    }
    let mut rest = (0..slots).filter(|b| !used[*b]);
    for p in perm.iter_mut().filter(|p| **p == usize::MAX) {
        *p = rest.next().expect("enough slots");
    }
    perm
}

/// MRP F1 for a single graph pair.
pub fn mrp_f1(gold: &MrpGraph, pred: &MrpGraph) -> Result<FrameworkScore> {
    let c = correspond(gold, pred, EvalOptions::default())?;
    Ok(FrameworkScore::from_counts(gold.framework, 1, &c.counts))
}

/// Scores whole prediction sets. Graphs pair up by id; a gold graph without a
/// prediction is scored against an empty graph. The macro average runs over
/// the frameworks present in `gold`.
pub fn evaluate(
    gold: &[MrpGraph],
    pred: &[MrpGraph],
    opts: EvalOptions,
    exec: Execution,
) -> Result<ScoreReport> {
    let pred_index: HashMap<(Framework, &str), &MrpGraph> =
        pred.iter().map(|g| ((g.framework, g.id.as_str()), g)).collect();
    let counts = parallel::try_map(gold, exec, |_, g| {
        let empty;
        let p = match pred_index.get(&(g.framework, g.id.as_str())) {
            Some(p) => *p,
            None => {
                empty = MrpGraph::new(g.id.clone(), g.framework, g.input.clone());
                &empty
            }
        };
        correspond(g, p, opts).map(|c| (g.framework, c.counts))
    })?;
    let mut per_fw: BTreeMap<Framework, (usize, GraphCounts)> = BTreeMap::new();
    for (fw, c) in counts {
        let e = per_fw.entry(fw).or_default();
        e.0 += 1;
        e.1.add(&c);
    }
    let frameworks: Vec<FrameworkScore> = per_fw
        .iter()
        .map(|(fw, (n, c))| FrameworkScore::from_counts(*fw, *n, c))
        .collect();
    let expected: Vec<Framework> = per_fw.keys().copied().collect();
    let (macro_f1, _) = macro_average(&frameworks, &expected);
    Ok(ScoreReport {
        metric: "MRP-F1 (toolkit)".into(),
        frameworks,
        macro_f1,
    })
}

type DepKey = (Option<Vec<Anchor>>, Vec<Anchor>, String);

fn node_key(g: &MrpGraph, id: usize) -> Vec<Anchor> {
    match g.node(id) {
        Some(n) if !n.anchors.is_empty() => n.anchors.clone(),
        // Unanchored nodes fall back to their id, encoded as a degenerate range.
        _ => vec![Anchor::new(id, id)],
    }
}

fn dependencies(g: &MrpGraph) -> Vec<DepKey> {
    let mut deps: Vec<DepKey> = g
        .tops
        .iter()
        .map(|t| (None, node_key(g, *t), "<TOP>".to_string()))
        .collect();
    deps.extend(g.edges.iter().map(|e| {
        (
            Some(node_key(g, e.source)),
            node_key(g, e.target),
            e.label.clone().unwrap_or_default(),
        )
    }));
    deps.sort();
    deps
}

/// Labeled dependency counts between two flavor-0 graphs. Nodes are identified
/// by their anchors, and each top is a dependency from a virtual root.
pub fn sdp_counts(gold: &MrpGraph, pred: &MrpGraph) -> Counts {
    let g = dependencies(gold);
    let p = dependencies(pred);
    // Multiset intersection of two sorted lists.
    let (mut i, mut j, mut matched) = (0, 0, 0);
    while i < g.len() && j < p.len() {
        match g[i].cmp(&p[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                matched += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Counts {
        gold: g.len(),
        pred: p.len(),
        matched,
    }
}

pub fn sdp_labeled_f1(gold: &MrpGraph, pred: &MrpGraph) -> f64 {
    sdp_counts(gold, pred).score().f1
}

/// Pooled SDP labeled F1 over aligned graph pairs.
pub fn sdp_labeled_f1_corpus<'a>(pairs: impl IntoIterator<Item = (&'a MrpGraph, &'a MrpGraph)>) -> f64 {
    let mut c = Counts::default();
    for (g, p) in pairs {
        c.add(sdp_counts(g, p));
    }
    c.score().f1
}
