//! Entity anonymization, sense stripping, DAG to tree conversion and the
//! inverse transformations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Framework, MrpEdge, MrpGraph, MrpNode, TokenRow};

pub const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// Removes trailing `-NN` sense suffixes (two or more digits).
pub fn strip_sense(label: &str) -> &str {
    let mut s = label;
    while let Some((base, suffix)) = s.rsplit_once('-') {
        if !base.is_empty() && suffix.len() >= 2 && suffix.bytes().all(|b| b.is_ascii_digit()) {
            s = base;
        } else {
            break;
        }
    }
    s
}

pub fn strip_senses<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    labels.into_iter().map(|l| strip_sense(l).to_string()).collect()
}

/// Most frequent full label per stripped label.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SenseTable {
    counts: BTreeMap<String, BTreeMap<String, usize>>,
}

impl SenseTable {
    pub fn observe(&mut self, label: &str) {
        let base = strip_sense(label);
        if base != label {
            *self.counts.entry(base.to_string()).or_default().entry(label.to_string()).or_default() += 1;
        }
    }

    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a MrpGraph>) -> Self {
        let mut t = SenseTable::default();
        for g in graphs {
            for n in &g.nodes {
                if let Some(l) = &n.label {
                    t.observe(l);
                }
            }
        }
        t
    }

    pub fn restore(&self, base: &str) -> String {
        self.counts
            .get(base)
            .and_then(|c| c.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))))
            .map_or_else(|| base.to_string(), |(l, _)| l.clone())
    }
}

/// One collapsed entity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    /// e.g. `PERSON.0`.
    pub anon: String,
    pub concept: String,
    pub concept_props: Vec<(String, String)>,
    /// Properties of the `name` node for named entities.
    pub name_props: Option<Vec<(String, String)>>,
    /// Token span, inclusive.
    pub span: (usize, usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionRecord {
    pub entities: Vec<EntityRecord>,
}

impl SubstitutionRecord {
    pub fn get(&self, anon: &str) -> Option<&EntityRecord> {
        self.entities.iter().find(|e| e.anon == anon)
    }
}

/// `person` → `PERSON`, `date-entity` → `DATE`.
pub fn entity_type(concept: &str) -> String {
    concept.strip_suffix("-entity").unwrap_or(concept).to_uppercase().replace('-', "_")
}

/// Whether a label has the `TYPE.k` shape of an anonymized entity.
pub fn is_anonymized(label: &str) -> bool {
    label.rsplit_once('.').is_some_and(|(t, k)| {
        t.starts_with(|c: char| c.is_ascii_uppercase())
            && t.chars().all(|c| c.is_ascii_uppercase() || c == '_' || c.is_ascii_digit())
            && !k.is_empty()
            && k.bytes().all(|b| b.is_ascii_digit())
    })
}

fn lcp(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

/// Strings to look for when locating a property value in the tokens.
fn value_variants(key: &str, value: &str) -> Vec<String> {
    if key == "month" {
        if let Ok(m) = value.parse::<usize>() {
            if (1..=12).contains(&m) {
                let full = MONTHS[m - 1];
                return vec![full.to_string(), full[..3].to_string(), value.to_string()];
            }
        }
    }
    vec![value.to_string()]
}

/// Best-matching token for a value by longest common prefix; a match needs a
/// prefix of at least `min(3, len)` characters.
fn locate_value(key: &str, value: &str, tokens: &[TokenRow], taken: &BTreeSet<usize>) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for v in value_variants(key, value) {
        let v = v.to_lowercase();
        let need = v.chars().count().min(3);
        for (k, t) in tokens.iter().enumerate() {
            if taken.contains(&k) {
                continue;
            }
            let l = lcp(&t.surface.to_lowercase(), &v);
            if l >= need && l > 0 && best.is_none_or(|(bl, _)| l > bl) {
                best = Some((l, k));
            }
        }
    }
    best.map(|(_, k)| k)
}

fn sorted_props(props: &[(String, String)]) -> Vec<(String, String)> {
    let mut p = props.to_vec();
    let key = |k: &str| -> (String, usize) {
        let digits: String = k.chars().rev().take_while(|c| c.is_ascii_digit()).collect::<Vec<_>>().into_iter().rev().collect();
        (k[..k.len() - digits.len()].to_string(), digits.parse().unwrap_or(0))
    };
    p.sort_by_key(|(k, _)| key(k));
    p
}

/// Anonymized graph, substitution record and a per-token entity type (`O`
/// outside entities).
#[derive(Clone, Debug, PartialEq)]
pub struct Anonymized {
    pub graph: MrpGraph,
    pub record: SubstitutionRecord,
    pub ne: Vec<String>,
}

/// Collapses `name` subgraphs and `*-entity` nodes into `TYPE.k` nodes.
/// Entities whose values cannot be found in the tokens stay as they are.
pub fn anonymize(g: &MrpGraph, tokens: &[TokenRow]) -> Anonymized {
    let indeg = |id: usize| g.edges.iter().filter(|e| e.target == id).count();
    let outdeg = |id: usize| g.edges.iter().filter(|e| e.source == id).count();
    struct Found {
        node: usize,
        name: Option<usize>,
        span: (usize, usize),
    }
    let mut found: Vec<Found> = Vec::new();
    let mut used = BTreeSet::new();
    let mut taken = BTreeSet::new();
    for e in &g.edges {
        if e.label.as_deref() != Some("name") || used.contains(&e.source) {
            continue;
        }
        let Some(n) = g.node(e.target) else { continue };
        if n.label.as_deref() != Some("name") || indeg(n.id) != 1 || outdeg(n.id) != 0 || n.properties.is_empty() {
            continue;
        }
        let mut hits = Vec::new();
        let mut local = taken.clone();
        for (k, v) in sorted_props(&n.properties) {
            match locate_value(&k, &v, tokens, &local) {
                Some(t) => {
                    local.insert(t);
                    hits.push(t);
                }
                None => {
                    hits.clear();
                    break;
                }
            }
        }
        if hits.is_empty() {
            log::debug!("{}: entity at node {} not located", g.id, e.source);
            continue;
        }
        taken = local;
        used.insert(e.source);
        used.insert(n.id);
        found.push(Found {
            node: e.source,
            name: Some(n.id),
            span: (*hits.iter().min().expect("nonempty"), *hits.iter().max().expect("nonempty")),
        });
    }
    for n in &g.nodes {
        let Some(label) = &n.label else { continue };
        if !label.ends_with("-entity") || used.contains(&n.id) || outdeg(n.id) != 0 {
            continue;
        }
        let mut local = taken.clone();
        let mut hits = Vec::new();
        for (k, v) in sorted_props(&n.properties) {
            if let Some(t) = locate_value(&k, &v, tokens, &local) {
                local.insert(t);
                hits.push(t);
            }
        }
        if hits.is_empty() {
            log::debug!("{}: entity at node {} not located", g.id, n.id);
            continue;
        }
        taken = local;
        used.insert(n.id);
        found.push(Found {
            node: n.id,
            name: None,
            span: (*hits.iter().min().expect("nonempty"), *hits.iter().max().expect("nonempty")),
        });
    }
    found.sort_by_key(|f| (f.span.0, f.node));
    let mut out = g.clone();
    let mut record = SubstitutionRecord::default();
    let mut ne = vec!["O".to_string(); tokens.len()];
    let mut per_type: BTreeMap<String, usize> = BTreeMap::new();
    for f in &found {
        let node = g.node(f.node).expect("found node exists");
        let concept = node.label.clone().unwrap_or_default();
        let ty = entity_type(&concept);
        let k = per_type.entry(ty.clone()).or_default();
        let anon = format!("{ty}.{k}");
        *k += 1;
        record.entities.push(EntityRecord {
            anon: anon.clone(),
            concept,
            concept_props: node.properties.clone(),
            name_props: f.name.map(|n| g.node(n).expect("name node").properties.clone()),
            span: f.span,
        });
        for slot in &mut ne[f.span.0..=f.span.1] {
            *slot = ty.clone();
        }
        let m = out.node_mut(f.node).expect("node exists");
        m.label = Some(anon);
        m.properties.clear();
        if let Some(n) = f.name {
            out.nodes.retain(|x| x.id != n);
            out.edges.retain(|e| e.target != n && e.source != n);
        }
    }
    Anonymized { graph: out, record, ne }
}

/// A node of the serialization tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub label: String,
    pub properties: Vec<(String, String)>,
    pub parent: Option<usize>,
    pub edge: Option<String>,
    /// Position of the first occurrence when this node is a replica.
    pub replica_of: Option<usize>,
    /// Node id in the source graph.
    pub origin: usize,
}

/// Pre-order spanning tree of an AMR DAG with reentrant nodes replicated once
/// per extra incoming edge.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrTree {
    pub nodes: Vec<TreeNode>,
}

impl AmrTree {
    /// `(parent, child, label)` over positions.
    pub fn edges(&self) -> Vec<(usize, usize, String)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| Some((n.parent?, i, n.edge.clone()?)))
            .collect()
    }

    pub fn replicas(&self) -> usize {
        self.nodes.iter().filter(|n| n.replica_of.is_some()).count()
    }

    pub fn decoded(&self) -> Vec<DecodedNode> {
        self.nodes
            .iter()
            .map(|n| DecodedNode {
                label: n.label.clone(),
                replica_of: n.replica_of,
                properties: n.properties.clone(),
            })
            .collect()
    }
}

/// Topological check; returns an error naming a node on a cycle.
fn check_acyclic(g: &MrpGraph) -> Result<()> {
    let mut indeg: BTreeMap<usize, usize> = g.nodes.iter().map(|n| (n.id, 0)).collect();
    for e in &g.edges {
        *indeg.entry(e.target).or_default() += 1;
    }
    let mut queue: VecDeque<usize> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut seen = 0;
    while let Some(x) = queue.pop_front() {
        seen += 1;
        for e in g.edges.iter().filter(|e| e.source == x) {
            let d = indeg.get_mut(&e.target).expect("target known");
            *d -= 1;
            if *d == 0 {
                queue.push_back(e.target);
            }
        }
    }
    if seen < indeg.len() {
        let on_cycle = indeg.iter().find(|(_, d)| **d > 0).map_or(0, |(n, _)| *n);
        return Err(Error::Validation {
            id: g.id.clone(),
            message: format!("graph has a cycle through node {on_cycle}"),
        });
    }
    Ok(())
}

/// Pre-order traversal from the single top. Children are visited by aligned
/// token position when known, then edge label, child label and id. A node
/// reached again becomes a childless replica.
pub fn dag_to_tree(g: &MrpGraph, align: &BTreeMap<usize, usize>) -> Result<AmrTree> {
    let invalid = |message: String| Error::Validation {
        id: g.id.clone(),
        message,
    };
    let root = match g.tops.as_slice() {
        [t] => *t,
        [] => return Err(invalid("no top node".into())),
        _ => return Err(invalid("more than one top node".into())),
    };
    check_acyclic(g)?;
    let label = |id: usize| g.node(id).and_then(|n| n.label.clone()).unwrap_or_default();
    let mut children: BTreeMap<usize, Vec<&MrpEdge>> = BTreeMap::new();
    for e in &g.edges {
        children.entry(e.source).or_default().push(e);
    }
    for list in children.values_mut() {
        list.sort_by(|a, b| {
            let ka = (align.get(&a.target).is_none(), align.get(&a.target), a.label.as_deref(), label(a.target), a.target);
            let kb = (align.get(&b.target).is_none(), align.get(&b.target), b.label.as_deref(), label(b.target), b.target);
            ka.cmp(&kb)
        });
    }
    let mut tree = AmrTree::default();
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    // (node, parent position, edge label)
    let mut stack: Vec<(usize, Option<usize>, Option<String>)> = vec![(root, None, None)];
    while let Some((x, parent, edge)) = stack.pop() {
        let node = g.node(x).ok_or_else(|| invalid(format!("edge to missing node {x}")))?;
        let pos = tree.nodes.len();
        let replica_of = first.get(&x).copied();
        tree.nodes.push(TreeNode {
            label: node.label.clone().unwrap_or_default(),
            properties: node.properties.clone(),
            parent,
            edge,
            replica_of,
            origin: x,
        });
        if replica_of.is_some() {
            continue;
        }
        first.insert(x, pos);
        for e in children.get(&x).into_iter().flatten().rev() {
            stack.push((e.target, Some(pos), e.label.clone()));
        }
    }
    if first.len() != g.nodes.len() {
        return Err(invalid(format!(
            "{} nodes unreachable from the top",
            g.nodes.len() - first.len()
        )));
    }
    Ok(tree)
}

/// Expected tree size: nodes plus `Σ max(0, indegree − 1)`.
pub fn replicated_size(g: &MrpGraph) -> usize {
    let mut indeg: BTreeMap<usize, usize> = BTreeMap::new();
    for e in &g.edges {
        *indeg.entry(e.target).or_default() += 1;
    }
    g.nodes.len() + indeg.values().map(|d| d.saturating_sub(1)).sum::<usize>()
}

/// A generated node before postprocessing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedNode {
    pub label: String,
    pub replica_of: Option<usize>,
    pub properties: Vec<(String, String)>,
}

/// Everything `preprocess` produces for one training graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub tree: AmrTree,
    pub record: SubstitutionRecord,
    pub ne: Vec<String>,
}

/// First token whose lemma or lowercased surface equals the label.
pub fn label_position(label: &str, tokens: &[TokenRow]) -> Option<usize> {
    tokens
        .iter()
        .position(|t| t.lemma == label || t.surface.to_lowercase() == label)
}

pub fn preprocess(g: &MrpGraph, tokens: &[TokenRow]) -> Result<Preprocessed> {
    let anon = anonymize(g, tokens);
    let mut graph = anon.graph;
    let mut align = BTreeMap::new();
    for n in &mut graph.nodes {
        let Some(label) = n.label.clone() else { continue };
        if let Some(e) = anon.record.get(&label) {
            align.insert(n.id, e.span.0);
            continue;
        }
        let base = strip_sense(&label).to_string();
        if let Some(p) = label_position(&base, tokens) {
            align.insert(n.id, p);
        }
        n.label = Some(base);
    }
    let tree = dag_to_tree(&graph, &align)?;
    Ok(Preprocessed {
        tree,
        record: anon.record,
        ne: anon.ne,
    })
}

/// Merges replicas, expands anonymized entities and restores senses. The
/// first node is the top.
pub fn postprocess_amr(
    id: &str,
    input: &str,
    nodes: &[DecodedNode],
    edges: &[(usize, usize, String)],
    record: &SubstitutionRecord,
    senses: &SenseTable,
) -> MrpGraph {
    let mut g = MrpGraph::new(id, Framework::Amr, input);
    let resolve = |mut i: usize| {
        let mut guard = 0;
        while let Some(k) = nodes.get(i).and_then(|n| n.replica_of) {
            if k >= i || guard > nodes.len() {
                break;
            }
            i = k;
            guard += 1;
        }
        i
    };
    let mut id_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut names: Vec<(usize, Vec<(String, String)>)> = Vec::new();
    for (i, n) in nodes.iter().enumerate() {
        if resolve(i) != i {
            continue;
        }
        let nid = g.nodes.len();
        let mut node = MrpNode::new(nid);
        match record.get(&n.label) {
            Some(e) => {
                node.label = Some(e.concept.clone());
                node.properties = e.concept_props.clone();
                if let Some(p) = &e.name_props {
                    names.push((nid, p.clone()));
                }
            }
            None => {
                if is_anonymized(&n.label) {
                    log::debug!("{id}: no record for {}", n.label);
                }
                node.label = Some(senses.restore(&n.label));
                node.properties = n.properties.clone();
            }
        }
        g.nodes.push(node);
        id_of.insert(i, nid);
    }
    if !g.nodes.is_empty() {
        g.tops = vec![0];
    }
    let mut seen = BTreeSet::new();
    for (s, t, l) in edges {
        let (Some(&a), Some(&b)) = (id_of.get(&resolve(*s)), id_of.get(&resolve(*t))) else {
            continue;
        };
        if a != b && seen.insert((a, b, l.clone())) {
            g.edges.push(MrpEdge::new(a, b, l.clone()));
        }
    }
    for (owner, props) in names {
        let nid = g.nodes.len();
        let mut n = MrpNode::labeled(nid, "name");
        n.properties = props;
        g.nodes.push(n);
        g.edges.push(MrpEdge::new(owner, nid, "name"));
    }
    g
}

/// Deterministic renumbering: depth-first from the top with children ordered
/// by edge label, child label and properties; properties and edges sorted.
pub fn canonical_amr(g: &MrpGraph) -> MrpGraph {
    let sig = |id: usize| {
        let n = g.node(id);
        (
            n.and_then(|n| n.label.clone()).unwrap_or_default(),
            n.map(|n| sorted_props(&n.properties)).unwrap_or_default(),
        )
    };
    let mut order: Vec<usize> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut stack: Vec<usize> = g.tops.iter().rev().copied().collect();
    while let Some(x) = stack.pop() {
        if !seen.insert(x) {
            continue;
        }
        order.push(x);
        let mut kids: Vec<&MrpEdge> = g.edges.iter().filter(|e| e.source == x).collect();
        kids.sort_by(|a, b| (a.label.clone(), sig(a.target)).cmp(&(b.label.clone(), sig(b.target))));
        for e in kids.into_iter().rev() {
            stack.push(e.target);
        }
    }
    let mut rest: Vec<usize> = g.nodes.iter().map(|n| n.id).filter(|i| !seen.contains(i)).collect();
    rest.sort_by_key(|&i| sig(i));
    order.extend(rest);
    let new_id: BTreeMap<usize, usize> = order.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut out = MrpGraph::new(g.id.clone(), g.framework, g.input.clone());
    for &i in &order {
        let (label, props) = sig(i);
        let mut n = MrpNode::new(new_id[&i]);
        n.label = Some(label);
        n.properties = props;
        n.anchors = g.node(i).map(|n| n.anchors.clone()).unwrap_or_default();
        out.nodes.push(n);
    }
    out.tops = g.tops.iter().map(|t| new_id[t]).collect();
    out.edges = g
        .edges
        .iter()
        .map(|e| {
            let mut c = e.clone();
            c.source = new_id[&e.source];
            c.target = new_id[&e.target];
            c
        })
        .collect();
    out.edges.sort_by(|a, b| (a.source, a.target, &a.label).cmp(&(b.source, b.target, &b.label)));
    out
}

/// Companion NE tags to entity types and types to concepts, counted from
/// training records; builds substitution records at prediction time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityLexicon {
    tag_types: BTreeMap<String, BTreeMap<String, usize>>,
    type_concepts: BTreeMap<String, BTreeMap<String, usize>>,
    named: BTreeSet<String>,
}

/// `B-PER` → `PER`.
pub fn bare_tag(tag: &str) -> &str {
    tag.strip_prefix("B-").or_else(|| tag.strip_prefix("I-")).unwrap_or(tag)
}

fn most_frequent(m: &BTreeMap<String, usize>) -> Option<&str> {
    m.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(k, _)| k.as_str())
}

impl EntityLexicon {
    pub fn observe(&mut self, record: &SubstitutionRecord, tokens: &[TokenRow]) {
        for e in &record.entities {
            let ty = e.anon.rsplit_once('.').map_or(e.anon.as_str(), |(t, _)| t).to_string();
            if let Some(t) = tokens.get(e.span.0) {
                let tag = bare_tag(&t.ne);
                if tag != "O" {
                    *self.tag_types.entry(tag.to_string()).or_default().entry(ty.clone()).or_default() += 1;
                }
            }
            *self.type_concepts.entry(ty.clone()).or_default().entry(e.concept.clone()).or_default() += 1;
            if e.name_props.is_some() {
                self.named.insert(ty);
            }
        }
    }

    /// Entity spans from runs of equal companion NE tags, numbered per type in
    /// order of appearance.
    pub fn record_for(&self, tokens: &[TokenRow]) -> SubstitutionRecord {
        let mut out = SubstitutionRecord::default();
        let mut per_type: BTreeMap<String, usize> = BTreeMap::new();
        let mut k = 0;
        while k < tokens.len() {
            let tag = bare_tag(&tokens[k].ne);
            let mut end = k;
            while end + 1 < tokens.len()
                && bare_tag(&tokens[end + 1].ne) == tag
                && !tokens[end + 1].ne.starts_with("B-")
            {
                end += 1;
            }
            if tag != "O" {
                if let Some(ty) = self.tag_types.get(tag).and_then(most_frequent) {
                    let concept = self
                        .type_concepts
                        .get(ty)
                        .and_then(most_frequent)
                        .map_or_else(|| ty.to_lowercase(), str::to_string);
                    let n = per_type.entry(ty.to_string()).or_default();
                    let words: Vec<&str> = tokens[k..=end].iter().map(|t| t.surface.as_str()).collect();
                    let (concept_props, name_props) = if self.named.contains(ty) {
                        let props = words.iter().enumerate().map(|(i, w)| (format!("op{}", i + 1), w.to_string())).collect();
                        (Vec::new(), Some(props))
                    } else {
                        (guess_entity_props(&words), None)
                    };
                    out.entities.push(EntityRecord {
                        anon: format!("{ty}.{n}"),
                        concept,
                        concept_props,
                        name_props,
                        span: (k, end),
                    });
                    *n += 1;
                }
            }
            k = end + 1;
        }
        out
    }
}

/// Month names, four-digit years and one- or two-digit days.
fn guess_entity_props(words: &[&str]) -> Vec<(String, String)> {
    let mut props = Vec::new();
    for w in words {
        let lw = w.to_lowercase();
        if let Some(m) = MONTHS.iter().position(|m| {
            let m = m.to_lowercase();
            lw == m || (lw.len() >= 3 && m.starts_with(&lw))
        }) {
            props.push(("month".to_string(), (m + 1).to_string()));
        } else if w.len() == 4 && w.bytes().all(|b| b.is_ascii_digit()) {
            props.push(("year".to_string(), w.to_string()));
        } else if (1..=2).contains(&w.len()) && w.bytes().all(|b| b.is_ascii_digit()) {
            props.push(("day".to_string(), w.trim_start_matches('0').to_string()));
        }
    }
    props
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn senses() {
        assert_eq!(strip_sense("want-01"), "want");
        assert_eq!(strip_sense("dog"), "dog");
        assert_eq!(strip_sense("-"), "-");
        assert_eq!(strip_sense("have-org-role-91"), "have-org-role");
    }

    #[test]
    fn anonymized_shape() {
        assert!(is_anonymized("PERSON.0"));
        assert!(is_anonymized("DATE.12"));
        assert!(!is_anonymized("person"));
        assert!(!is_anonymized("3.5"));
        assert_eq!(entity_type("date-entity"), "DATE");
    }
}
