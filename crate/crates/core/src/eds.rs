//! EDS from predicted DM graphs: rule-based surface conversion, abstract node
//! generation (rules plus logistic regression) and anchor span prediction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use unimrp_tensor::{AdamConfig, AdamState, ParamId, ParamStore, Tape, Tensor, Var};

use crate::encoder::fnv1a;
use crate::error::{Error, Result};
use crate::graph::{Anchor, Framework, MrpEdge, MrpGraph, MrpNode, Sentence};
use crate::nn::{Activation, BiLstm, Ctx, Mlp};

/// Conditions on a DM node; absent fields match anything.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_type: Option<String>,
}

impl NodeMatch {
    fn matches(&self, n: &MrpNode) -> bool {
        let ty = frame_type(n);
        self.lemma.as_deref().is_none_or(|l| n.label.as_deref() == Some(l))
            && self.pos.as_deref().is_none_or(|p| n.property("pos") == Some(p))
            && self.frame_type.as_deref().is_none_or(|t| ty == t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRule {
    #[serde(flatten)]
    pub when: NodeMatch,
    /// Template with `{lemma}` and `{type}` placeholders.
    pub label: String,
}

/// Emits an abstract node attached to a matching DM node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRule {
    #[serde(flatten)]
    pub when: NodeMatch,
    pub label: String,
    pub edge: String,
}

/// An EDS label matching `pattern` implies a companion node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Implication {
    pub pattern: String,
    pub label: String,
    pub edge: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversionRuleSet {
    #[serde(default)]
    pub surface: Vec<SurfaceRule>,
    #[serde(default = "default_template")]
    pub default_label: String,
    #[serde(default)]
    pub edge_labels: BTreeMap<String, String>,
    #[serde(default)]
    pub generators: Vec<GeneratorRule>,
    #[serde(default)]
    pub implications: Vec<Implication>,
}

fn default_template() -> String {
    "_{lemma}_{type}".to_string()
}

impl Default for ConversionRuleSet {
    /// A small rule set covering coordination and quantified nouns.
    fn default() -> Self {
        ConversionRuleSet {
            surface: vec![SurfaceRule {
                when: NodeMatch {
                    lemma: Some("and".into()),
                    ..NodeMatch::default()
                },
                label: "_and_c".into(),
            }],
            default_label: default_template(),
            edge_labels: [("_and_c", "L-INDEX"), ("compound", "ARG1")]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            generators: Vec::new(),
            implications: vec![Implication {
                pattern: "^_and_c$".into(),
                label: "udef_q".into(),
                edge: "BV".into(),
            }],
        }
    }
}

impl ConversionRuleSet {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let rules: ConversionRuleSet = serde_json::from_reader(reader)?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn validate(&self) -> Result<()> {
        for imp in &self.implications {
            Regex::new(&imp.pattern)
                .map_err(|e| Error::config(format!("bad implication pattern `{}`: {e}", imp.pattern)))?;
        }
        Ok(())
    }

    pub fn surface_label(&self, n: &MrpNode) -> String {
        let template = self
            .surface
            .iter()
            .find(|r| r.when.matches(n))
            .map_or(self.default_label.as_str(), |r| r.label.as_str());
        template
            .replace("{lemma}", n.label.as_deref().unwrap_or("_"))
            .replace("{type}", frame_type(n))
    }

    pub fn edge_label<'a>(&'a self, label: &'a str) -> &'a str {
        self.edge_labels.get(label).map_or(label, String::as_str)
    }
}

fn frame_type(n: &MrpNode) -> &str {
    n.property("frame")
        .map(|f| f.split(':').next().unwrap_or(f))
        .unwrap_or("x")
}

/// How an abstract node came to be.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Rule,
    NodeSite,
    EdgeSite,
}

/// A partially built EDS graph plus bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct EdsPartial {
    pub graph: MrpGraph,
    /// DM node id → EDS node id.
    pub surface: BTreeMap<usize, usize>,
    /// EDS ids of abstract nodes with their origin.
    pub abstracts: Vec<(usize, Origin)>,
}

/// Converts every DM node to an EDS surface node and maps edge labels.
pub fn dm_to_eds_surface(dm: &MrpGraph, rules: &ConversionRuleSet) -> EdsPartial {
    let mut g = MrpGraph::new(dm.id.clone(), Framework::Eds, dm.input.clone());
    let mut surface = BTreeMap::new();
    for (k, n) in dm.nodes.iter().enumerate() {
        let mut e = MrpNode::labeled(k, rules.surface_label(n));
        e.anchors = n.anchors.clone();
        g.nodes.push(e);
        surface.insert(n.id, k);
    }
    g.tops = dm.tops.iter().filter_map(|t| surface.get(t).copied()).collect();
    for e in &dm.edges {
        let (Some(&s), Some(&t)) = (surface.get(&e.source), surface.get(&e.target)) else {
            continue;
        };
        let label = e.label.as_deref().unwrap_or("");
        g.edges.push(MrpEdge::new(s, t, rules.edge_label(label)));
    }
    EdsPartial {
        graph: g,
        surface,
        abstracts: Vec::new(),
    }
}

fn add_abstract(p: &mut EdsPartial, label: &str, attach: &[(usize, String)], origin: Origin) -> usize {
    let id = p.graph.next_id();
    p.graph.nodes.push(MrpNode::labeled(id, label));
    for (site, edge) in attach {
        match edge.strip_suffix(INVERSE) {
            Some(l) => p.graph.edges.push(MrpEdge::new(*site, id, l)),
            None => p.graph.edges.push(MrpEdge::new(id, *site, edge.clone())),
        }
    }
    p.abstracts.push((id, origin));
    id
}

/// Marks an edge class as pointing from the site to the abstract node.
pub const INVERSE: &str = "^-1";

/// Abstract nodes produced by generator rules and implications only.
pub fn apply_rules(p: &mut EdsPartial, dm: &MrpGraph, rules: &ConversionRuleSet) {
    for n in &dm.nodes {
        for r in rules.generators.iter().filter(|r| r.when.matches(n)) {
            let site = p.surface[&n.id];
            add_abstract(p, &r.label, &[(site, r.edge.clone())], Origin::Rule);
        }
    }
    let patterns: Vec<Regex> = rules
        .implications
        .iter()
        .map(|i| Regex::new(&i.pattern).expect("validated pattern"))
        .collect();
    let surface_ids: Vec<usize> = p.surface.values().copied().collect();
    for site in surface_ids {
        let label = p.graph.node(site).and_then(|n| n.label.clone()).unwrap_or_default();
        for (imp, re) in rules.implications.iter().zip(&patterns) {
            if re.is_match(&label) {
                add_abstract(p, &imp.label, &[(site, imp.edge.clone())], Origin::Rule);
            }
        }
    }
}

/// Hashed sparse features: `(bucket, value)` pairs.
pub fn hash_features(features: &[String], dim: usize) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for f in features {
        *acc.entry((fnv1a(f.as_bytes()) % dim as u64) as usize).or_default() += 1.0;
    }
    acc.into_iter().collect()
}

/// Node-site features: POS, frame, node label, adjacent edge labels.
pub fn node_features(dm: &MrpGraph, id: usize) -> Vec<String> {
    let mut f = vec!["bias".to_string()];
    if let Some(n) = dm.node(id) {
        f.push(format!("pos={}", n.property("pos").unwrap_or("-")));
        f.push(format!("frame={}", n.property("frame").unwrap_or("-")));
        f.push(format!("type={}", frame_type(n)));
        f.push(format!("lemma={}", n.label.as_deref().unwrap_or("-")));
    }
    for e in &dm.edges {
        let l = e.label.as_deref().unwrap_or("-");
        if e.source == id {
            f.push(format!("out={l}"));
        }
        if e.target == id {
            f.push(format!("in={l}"));
        }
    }
    if dm.tops.contains(&id) {
        f.push("top".into());
    }
    f
}

/// Edge-site features: the DM edge label and both endpoint node features.
pub fn edge_features(dm: &MrpGraph, e: &MrpEdge) -> Vec<String> {
    let mut f = vec!["bias".to_string(), format!("edge={}", e.label.as_deref().unwrap_or("-"))];
    f.extend(node_features(dm, e.source).into_iter().map(|x| format!("src.{x}")));
    f.extend(node_features(dm, e.target).into_iter().map(|x| format!("tgt.{x}")));
    f
}

/// Logistic regression over hashed features. A model with one class is
/// binary (sigmoid); otherwise softmax over `classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub dim: usize,
    pub classes: Vec<String>,
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegTraining {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for LogRegTraining {
    fn default() -> Self {
        LogRegTraining {
            epochs: 100,
            lr: 0.05,
            seed: 0,
        }
    }
}

impl LogReg {
    pub fn new(dim: usize, classes: Vec<String>) -> Self {
        let c = classes.len().max(1);
        LogReg {
            dim,
            w: Tensor::zeros(dim, c),
            b: Tensor::zeros(1, c),
            classes,
        }
    }

    pub fn binary(dim: usize) -> Self {
        LogReg::new(dim, vec!["yes".into()])
    }

    pub fn is_binary(&self) -> bool {
        self.classes.len() == 1
    }

    fn design(&self, rows: &[&[String]]) -> Tensor {
        let mut x = Tensor::zeros(rows.len(), self.dim);
        for (r, f) in rows.iter().enumerate() {
            for (k, v) in hash_features(f, self.dim) {
                x.set(r, k, v);
            }
        }
        x
    }

    fn logits(&self, features: &[String]) -> Vec<f64> {
        let c = self.w.cols();
        let mut z = self.b.data().to_vec();
        for (k, v) in hash_features(features, self.dim) {
            for (j, zj) in z.iter_mut().enumerate().take(c) {
                *zj += v * self.w.get(k, j);
            }
        }
        z
    }

    /// Binary: probability of the positive class, in (0, 1).
    pub fn probability(&self, features: &[String]) -> f64 {
        crate::biaffine::sigmoid(self.logits(features)[0])
    }

    /// Multi-class distribution over `classes`.
    pub fn distribution(&self, features: &[String]) -> Vec<f64> {
        let z = self.logits(features);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn predict(&self, features: &[String]) -> &str {
        let d = self.distribution(features);
        &self.classes[unimrp_tensor::argmax(&d)]
    }

    /// Full-batch Adam on the mean log loss. Binary targets are 0/1.
    pub fn fit(&mut self, examples: &[(Vec<String>, usize)], cfg: LogRegTraining) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut store = ParamStore::new();
        let w = store.add("w", self.w.clone());
        let b = store.add("b", self.b.clone());
        let rows: Vec<&[String]> = examples.iter().map(|(f, _)| f.as_slice()).collect();
        let x = self.design(&rows);
        let n = examples.len() as f64;
        let mut adam = AdamState::new(AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        });
        let mut last = 0.0;
        for _ in 0..cfg.epochs {
            let (loss, grads) = {
                let mut tape = Tape::new(&store);
                let xv = tape.constant(x.clone());
                let wv = tape.param(w);
                let bv = tape.param(b);
                let z = tape.matmul(xv, wv)?;
                let z = tape.add(z, bv)?;
                let loss = if self.is_binary() {
                    let t = Tensor::column(examples.iter().map(|(_, y)| *y as f64).collect());
                    tape.bce_with_logits(z, t, None)?
                } else {
                    let t: Vec<usize> = examples.iter().map(|(_, y)| *y).collect();
                    tape.cross_entropy(z, &t, None)?
                };
                let loss = tape.scale(loss, 1.0 / n);
                (tape.scalar_value(loss), tape.backward(loss).into_params())
            };
            adam.step(&mut store, &grads);
            last = loss;
        }
        self.w = store.get(w).clone();
        self.b = store.get(b).clone();
        Ok(last)
    }
}

/// Detector, node labeller and edge labeller for one kind of site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteModels {
    pub detector: LogReg,
    pub labeler: LogReg,
    /// Edge class from the abstract node to the site (or its source for edge
    /// sites); `INVERSE`-suffixed classes point the other way.
    pub edge_labeler: LogReg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractModels {
    pub node: SiteModels,
    pub edge: SiteModels,
    pub threshold: f64,
}

/// Training examples for one kind of site.
#[derive(Clone, Debug, Default)]
pub struct SiteExamples {
    pub detect: Vec<(Vec<String>, bool)>,
    pub label: Vec<(Vec<String>, String)>,
    pub edge: Vec<(Vec<String>, String)>,
}

impl SiteExamples {
    fn fit(&self, dim: usize, cfg: LogRegTraining) -> Result<SiteModels> {
        let mut detector = LogReg::binary(dim);
        let det: Vec<(Vec<String>, usize)> = self.detect.iter().map(|(f, y)| (f.clone(), usize::from(*y))).collect();
        detector.fit(&det, cfg)?;
        let fit_multi = |ex: &[(Vec<String>, String)]| -> Result<LogReg> {
            let classes: Vec<String> = ex.iter().map(|(_, c)| c.clone()).collect::<BTreeSet<_>>().into_iter().collect();
            let classes = if classes.is_empty() { vec!["_".to_string()] } else { classes };
            let mut m = LogReg::new(dim, classes.clone());
            let data: Vec<(Vec<String>, usize)> = ex
                .iter()
                .map(|(f, c)| (f.clone(), classes.iter().position(|x| x == c).expect("collected")))
                .collect();
            if classes.len() > 1 {
                m.fit(&data, cfg)?;
            }
            Ok(m)
        };
        Ok(SiteModels {
            detector,
            labeler: fit_multi(&self.label)?,
            edge_labeler: fit_multi(&self.edge)?,
        })
    }
}

/// Gold abstract nodes not explained by rules, attributed to DM sites.
pub fn collect_examples(
    dm: &MrpGraph,
    eds: &MrpGraph,
    rules: &ConversionRuleSet,
) -> (SiteExamples, SiteExamples) {
    let mut partial = dm_to_eds_surface(dm, rules);
    apply_rules(&mut partial, dm, rules);
    // Gold surface correspondents: same anchors, preferring the same label.
    let mut used = BTreeSet::new();
    let mut gold_of_dm: BTreeMap<usize, usize> = BTreeMap::new();
    for n in &dm.nodes {
        let want = partial.graph.node(partial.surface[&n.id]).and_then(|x| x.label.clone());
        let same_anchor: Vec<&MrpNode> = eds
            .nodes
            .iter()
            .filter(|g| !used.contains(&g.id) && !g.anchors.is_empty() && g.anchors == n.anchors)
            .collect();
        let pick = same_anchor
            .iter()
            .find(|g| g.label == want)
            .or_else(|| same_anchor.first())
            .map(|g| g.id);
        if let Some(id) = pick {
            used.insert(id);
            gold_of_dm.insert(id, n.id);
        }
    }
    // Rule nodes consume matching gold abstracts.
    let mut rule_taken = BTreeSet::new();
    for &(a, _) in &partial.abstracts {
        let label = partial.graph.node(a).and_then(|n| n.label.clone());
        let site_dm: Vec<usize> = partial
            .graph
            .edges
            .iter()
            .filter(|e| e.source == a || e.target == a)
            .map(|e| if e.source == a { e.target } else { e.source })
            .filter_map(|s| partial.surface.iter().find(|(_, v)| **v == s).map(|(k, _)| *k))
            .collect();
        if let Some(g) = eds.nodes.iter().find(|g| {
            !used.contains(&g.id)
                && !rule_taken.contains(&g.id)
                && g.label == label
                && eds.edges.iter().any(|e| {
                    let other = if e.source == g.id { e.target } else if e.target == g.id { e.source } else { return false };
                    gold_of_dm.get(&other).is_some_and(|d| site_dm.contains(d))
                })
        }) {
            rule_taken.insert(g.id);
        }
    }
    let mut node_ex = SiteExamples::default();
    let mut edge_ex = SiteExamples::default();
    let mut node_sites: BTreeMap<usize, (String, String)> = BTreeMap::new();
    let mut edge_sites: BTreeMap<(usize, usize), (String, String)> = BTreeMap::new();
    for g in &eds.nodes {
        if used.contains(&g.id) || rule_taken.contains(&g.id) {
            continue;
        }
        let label = g.label.clone().unwrap_or_default();
        let mut links: Vec<(usize, String)> = Vec::new();
        for e in &eds.edges {
            let l = e.label.clone().unwrap_or_default();
            if e.source == g.id {
                if let Some(&d) = gold_of_dm.get(&e.target) {
                    links.push((d, l));
                }
            } else if e.target == g.id {
                if let Some(&d) = gold_of_dm.get(&e.source) {
                    links.push((d, format!("{l}{INVERSE}")));
                }
            }
        }
        let pair = (links.len() >= 2)
            .then(|| dm.edges.iter().find(|e| e.source == links[0].0 && e.target == links[1].0 || e.source == links[1].0 && e.target == links[0].0))
            .flatten();
        match (pair, links.first()) {
            (Some(e), _) => {
                let edge_label = links.iter().find(|(d, _)| *d == e.source).map(|(_, l)| l.clone()).unwrap_or_default();
                edge_sites.entry((e.source, e.target)).or_insert((label, edge_label));
            }
            (None, Some((d, l))) => {
                node_sites.entry(*d).or_insert((label, l.clone()));
            }
            (None, None) => {}
        }
    }
    for n in &dm.nodes {
        let f = node_features(dm, n.id);
        match node_sites.get(&n.id) {
            Some((label, edge)) => {
                node_ex.detect.push((f.clone(), true));
                node_ex.label.push((f.clone(), label.clone()));
                node_ex.edge.push((f, edge.clone()));
            }
            None => node_ex.detect.push((f, false)),
        }
    }
    for e in &dm.edges {
        let f = edge_features(dm, e);
        match edge_sites.get(&(e.source, e.target)) {
            Some((label, edge)) => {
                edge_ex.detect.push((f.clone(), true));
                edge_ex.label.push((f.clone(), label.clone()));
                edge_ex.edge.push((f, edge.clone()));
            }
            None => edge_ex.detect.push((f, false)),
        }
    }
    (node_ex, edge_ex)
}

impl AbstractModels {
    pub fn untrained(dim: usize) -> Self {
        let empty = || SiteModels {
            detector: LogReg::binary(dim),
            labeler: LogReg::new(dim, vec!["_".into()]),
            edge_labeler: LogReg::new(dim, vec!["ARG1".into()]),
        };
        AbstractModels {
            node: empty(),
            edge: empty(),
            threshold: 0.5,
        }
    }

    pub fn train<'a>(
        pairs: impl IntoIterator<Item = (&'a MrpGraph, &'a MrpGraph)>,
        rules: &ConversionRuleSet,
        dim: usize,
        cfg: LogRegTraining,
    ) -> Result<Self> {
        let mut node = SiteExamples::default();
        let mut edge = SiteExamples::default();
        for (dm, eds) in pairs {
            let (n, e) = collect_examples(dm, eds, rules);
            node.detect.extend(n.detect);
            node.label.extend(n.label);
            node.edge.extend(n.edge);
            edge.detect.extend(e.detect);
            edge.label.extend(e.label);
            edge.edge.extend(e.edge);
        }
        Ok(AbstractModels {
            node: node.fit(dim, cfg)?,
            edge: edge.fit(dim, cfg)?,
            threshold: 0.5,
        })
    }
}

/// Rule nodes plus detector-fired nodes at node and edge sites. Abstract nodes
/// have no anchors yet.
pub fn generate_abstract_nodes(
    dm: &MrpGraph,
    rules: &ConversionRuleSet,
    models: Option<&AbstractModels>,
) -> EdsPartial {
    let mut p = dm_to_eds_surface(dm, rules);
    apply_rules(&mut p, dm, rules);
    let Some(m) = models else { return p };
    for n in &dm.nodes {
        let f = node_features(dm, n.id);
        if m.node.detector.probability(&f) > m.threshold {
            let label = m.node.labeler.predict(&f).to_string();
            let edge = m.node.edge_labeler.predict(&f).to_string();
            let site = p.surface[&n.id];
            add_abstract(&mut p, &label, &[(site, edge)], Origin::NodeSite);
        }
    }
    for e in &dm.edges {
        let f = edge_features(dm, e);
        if m.edge.detector.probability(&f) > m.threshold {
            let label = m.edge.labeler.predict(&f).to_string();
            let edge = m.edge.edge_labeler.predict(&f).to_string();
            let s = p.surface[&e.source];
            let t = p.surface[&e.target];
            let second = if edge.ends_with(INVERSE) { format!("ARG2{INVERSE}") } else { "ARG2".to_string() };
            add_abstract(&mut p, &label, &[(s, edge), (t, second)], Origin::EdgeSite);
        }
    }
    p
}

/// Token indices (0-based) reachable from abstract node `a` through outgoing
/// edges; adjacent surface tokens when nothing is reachable.
pub fn descendant_tokens(g: &MrpGraph, a: usize, sentence: &Sentence) -> BTreeSet<usize> {
    let token_of = |id: usize| -> Option<usize> {
        let n = g.node(id)?;
        let from = n.anchors.iter().map(|x| x.from).min()?;
        let to = n.anchors.iter().map(|x| x.to).max()?;
        Some(
            sentence
                .tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| t.anchor.from < to && t.anchor.to > from)
                .map(|(k, _)| k)
                .collect::<Vec<_>>(),
        )
        .filter(|v: &Vec<usize>| !v.is_empty())
        .map(|v| v[0])
    };
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::from([a]);
    let mut stack = vec![a];
    while let Some(x) = stack.pop() {
        for e in g.edges.iter().filter(|e| e.source == x) {
            if seen.insert(e.target) {
                if let Some(t) = token_of(e.target) {
                    out.insert(t);
                }
                stack.push(e.target);
            }
        }
    }
    if out.is_empty() {
        for e in &g.edges {
            let other = if e.source == a { e.target } else if e.target == a { e.source } else { continue };
            if let Some(t) = token_of(other) {
                out.insert(t);
            }
        }
    }
    out
}

/// Span predictor for abstract nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorNet {
    /// Index 0 is `<UNK>`.
    pub labels: Vec<String>,
    pub embed: ParamId,
    pub bilstm: BiLstm,
    pub from: Mlp,
    pub to: Mlp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSample {
    pub label: String,
    pub tokens: BTreeSet<usize>,
    /// Gold token span, inclusive.
    pub span: Option<(usize, usize)>,
}

impl AnchorNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        labels: Vec<String>,
        embed_dim: usize,
        hidden: usize,
        encoder_width: usize,
        mlp_hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut all = vec![crate::encoder::UNK_TOKEN.to_string()];
        all.extend(labels.into_iter().filter(|l| l != crate::encoder::UNK_TOKEN));
        all.dedup();
        let embed = store.add(format!("{name}.embed"), Tensor::normal(all.len(), embed_dim, 0.1, rng));
        AnchorNet {
            bilstm: BiLstm::new(store, &format!("{name}.bilstm"), embed_dim, hidden, 1, 0.0, rng),
            from: Mlp::new(store, &format!("{name}.from"), encoder_width, mlp_hidden, 2 * hidden, Activation::Elu, 0.0, rng),
            to: Mlp::new(store, &format!("{name}.to"), encoder_width, mlp_hidden, 2 * hidden, Activation::Elu, 0.0, rng),
            labels: all,
            embed,
        }
    }

    pub fn label_index(&self, label: &str) -> usize {
        self.labels.iter().position(|l| l == label).unwrap_or(0)
    }

    /// Feature indices `x_{i,j}`: the node label inside `tokens`, `<UNK>` elsewhere.
    pub fn inputs(&self, sample: &AnchorSample, len: usize) -> Vec<usize> {
        let l = self.label_index(&sample.label);
        (0..len).map(|j| if sample.tokens.contains(&j) { l } else { 0 }).collect()
    }

    /// From/to logits (1×L each) over tokens; `states` excludes `<ROOT>`.
    pub fn logits(&self, tape: &mut Tape, states: Var, sample: &AnchorSample, ctx: &mut Ctx) -> Result<(Var, Var)> {
        let len = tape.shape(states)[0];
        let x = tape.embedding(self.embed, &self.inputs(sample, len))?;
        let h = self.bilstm.forward(tape, x, ctx)?.top();
        let mut out = Vec::with_capacity(2);
        for mlp in [&self.from, &self.to] {
            let m = mlp.forward(tape, states, ctx)?;
            let prod = tape.mul(h, m)?;
            let col = tape.sum_rows(prod);
            out.push(tape.transpose(col));
        }
        Ok((out[0], out[1]))
    }

    /// Distributions over tokens for the span endpoints.
    pub fn distributions(&self, tape: &mut Tape, states: Var, sample: &AnchorSample) -> Result<(Vec<f64>, Vec<f64>)> {
        let (f, t) = self.logits(tape, states, sample, &mut Ctx::eval())?;
        let f = tape.softmax(f);
        let t = tape.softmax(t);
        Ok((tape.value(f).data().to_vec(), tape.value(t).data().to_vec()))
    }
}

/// Sum over nodes of from and to cross-entropies.
pub fn anchor_loss(tape: &mut Tape, logits: &[(Var, Var)], gold: &[(usize, usize)]) -> Result<Var> {
    let mut terms = Vec::new();
    for (&(f, t), &(gf, gt)) in logits.iter().zip(gold) {
        terms.push((1.0, tape.cross_entropy(f, &[gf], None)?));
        terms.push((1.0, tape.cross_entropy(t, &[gt], None)?));
    }
    if terms.is_empty() {
        return Ok(tape.scalar(0.0));
    }
    Ok(tape.lin_comb(&terms)?)
}

/// `[argmax from, argmax to]`, swapped when reversed. The flag reports a swap.
pub fn pick_span(from: &[f64], to: &[f64]) -> ((usize, usize), bool) {
    let a = unimrp_tensor::argmax(from);
    let b = unimrp_tensor::argmax(to);
    if a > b {
        ((b, a), true)
    } else {
        ((a, b), false)
    }
}

/// Inclusive token span covering a character anchor.
pub fn token_span(sentence: &Sentence, anchors: &[Anchor]) -> Option<(usize, usize)> {
    let from = anchors.iter().map(|a| a.from).min()?;
    let to = anchors.iter().map(|a| a.to).max()?;
    let hits: Vec<usize> = sentence
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.anchor.from < to && t.anchor.to > from)
        .map(|(k, _)| k)
        .collect();
    Some((*hits.first()?, *hits.last()?))
}

/// Anchor samples for the abstract nodes of a gold EDS graph, using the gold
/// DM graph to tell surface nodes apart.
pub fn gold_anchor_samples(dm: &MrpGraph, eds: &MrpGraph, sentence: &Sentence) -> Vec<AnchorSample> {
    let dm_anchors: BTreeSet<Vec<Anchor>> = dm.nodes.iter().map(|n| n.anchors.clone()).collect();
    let mut seen_surface = BTreeSet::new();
    let mut out = Vec::new();
    for n in &eds.nodes {
        if dm_anchors.contains(&n.anchors) && seen_surface.insert(n.anchors.clone()) {
            continue;
        }
        out.push(AnchorSample {
            label: n.label.clone().unwrap_or_default(),
            tokens: descendant_tokens(eds, n.id, sentence),
            span: token_span(sentence, &n.anchors),
        });
    }
    out
}

/// Fills in anchors of abstract nodes. Returns the number of swapped spans.
pub fn anchor_abstract_nodes(
    p: &mut EdsPartial,
    sentence: &Sentence,
    net: &AnchorNet,
    store: &ParamStore,
    token_states: &Tensor,
) -> Result<usize> {
    let mut swaps = 0;
    if sentence.tokens.is_empty() {
        return Ok(0);
    }
    let ids: Vec<usize> = p.abstracts.iter().map(|(a, _)| *a).collect();
    for a in ids {
        let sample = AnchorSample {
            label: p.graph.node(a).and_then(|n| n.label.clone()).unwrap_or_default(),
            tokens: descendant_tokens(&p.graph, a, sentence),
            span: None,
        };
        let mut tape = Tape::new(store);
        let states = tape.constant(token_states.clone());
        let (f, t) = net.distributions(&mut tape, states, &sample)?;
        let ((i, j), swapped) = pick_span(&f, &t);
        swaps += usize::from(swapped);
        let anchor = Anchor::new(sentence.tokens[i].anchor.from, sentence.tokens[j].anchor.to);
        if let Some(n) = p.graph.node_mut(a) {
            n.anchors = vec![anchor];
        }
    }
    Ok(swaps)
}

/// All EDS-specific learned and rule components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdsResources {
    pub rules: ConversionRuleSet,
    pub models: Option<AbstractModels>,
}

impl Default for EdsResources {
    fn default() -> Self {
        EdsResources {
            rules: ConversionRuleSet::default(),
            models: None,
        }
    }
}

/// Label inventory for the anchor network from gold samples.
pub fn anchor_labels<'a>(samples: impl IntoIterator<Item = &'a AnchorSample>) -> Vec<String> {
    let set: BTreeSet<String> = samples.into_iter().map(|s| s.label.clone()).collect();
    set.into_iter().collect()
}

/// Counts per origin, for diagnostics.
pub fn origin_counts(p: &EdsPartial) -> HashMap<Origin, usize> {
    let mut m = HashMap::new();
    for (_, o) in &p.abstracts {
        *m.entry(*o).or_default() += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(labels: &[&str]) -> MrpGraph {
        let mut g = MrpGraph::new("s", Framework::Dm, "x");
        for (k, l) in labels.iter().enumerate() {
            let mut n = MrpNode::labeled(k, *l);
            n.anchors.push(Anchor::new(2 * k, 2 * k + 1));
            n.set_property("frame", "n:x");
            g.nodes.push(n);
        }
        g
    }

    #[test]
    fn coordination_implies_quantifier() {
        let g = dm(&["pork", "and", "beef"]);
        let p = generate_abstract_nodes(&g, &ConversionRuleSet::default(), None);
        assert_eq!(p.graph.nodes[1].label.as_deref(), Some("_and_c"));
        assert_eq!(p.graph.nodes[0].label.as_deref(), Some("_pork_n"));
        assert_eq!(p.abstracts.len(), 1);
        let q = p.graph.node(p.abstracts[0].0).unwrap();
        assert_eq!(q.label.as_deref(), Some("udef_q"));
        assert!(p.graph.edges.iter().any(|e| e.source == q.id && e.target == 1));
    }

    #[test]
    fn binary_logreg_is_a_probability() {
        let mut m = LogReg::binary(64);
        let ex = vec![(vec!["a".to_string()], 1), (vec!["b".to_string()], 0)];
        m.fit(&ex, LogRegTraining::default()).unwrap();
        let p = m.probability(&["a".to_string()]);
        assert!(p > 0.5 && p < 1.0);
        assert!(m.probability(&["b".to_string()]) < 0.5);
    }
}
