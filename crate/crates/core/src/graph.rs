//! MRP graphs, companion token data and their file formats.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Dm,
    Psd,
    Eds,
    Ucca,
    Amr,
}

impl Framework {
    pub const ALL: [Framework; 5] = [
        Framework::Dm,
        Framework::Psd,
        Framework::Eds,
        Framework::Ucca,
        Framework::Amr,
    ];

    pub fn flavor(self) -> u8 {
        match self {
            Framework::Dm | Framework::Psd => 0,
            Framework::Eds | Framework::Ucca => 1,
            Framework::Amr => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Framework::Dm => "dm",
            Framework::Psd => "psd",
            Framework::Eds => "eds",
            Framework::Ucca => "ucca",
            Framework::Amr => "amr",
        }
    }

    /// Parses a comma-separated list such as `dm,psd`.
    pub fn parse_list(s: &str) -> Result<Vec<Framework>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let fw: Framework = part.parse()?;
            if !out.contains(&fw) {
                out.push(fw);
            }
        }
        if out.is_empty() {
            return Err(Error::config("empty framework list"));
        }
        Ok(out)
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dm" => Ok(Framework::Dm),
            "psd" => Ok(Framework::Psd),
            "eds" => Ok(Framework::Eds),
            "ucca" => Ok(Framework::Ucca),
            "amr" => Ok(Framework::Amr),
            other => Err(Error::config(format!("unknown framework `{other}`"))),
        }
    }
}

/// Character range `[from, to)` into the graph input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Anchor {
    pub from: usize,
    pub to: usize,
}

impl Anchor {
    pub fn new(from: usize, to: usize) -> Self {
        Anchor { from, to }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MrpNode {
    pub id: usize,
    pub label: Option<String>,
    pub properties: Vec<(String, String)>,
    pub anchors: Vec<Anchor>,
}

impl MrpNode {
    pub fn new(id: usize) -> Self {
        MrpNode {
            id,
            ..Default::default()
        }
    }

    pub fn labeled(id: usize, label: impl Into<String>) -> Self {
        MrpNode {
            id,
            label: Some(label.into()),
            ..Default::default()
        }
    }

    pub fn property(&self, name: &str) -> Option<&str> {
        self.properties
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    /// Sets or replaces a property, keeping the position of an existing one.
    pub fn set_property(&mut self, name: &str, value: impl Into<String>) {
        let value = value.into();
        match self.properties.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.properties.push((name.to_string(), value)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MrpEdge {
    pub source: usize,
    pub target: usize,
    pub label: Option<String>,
    pub attributes: Vec<(String, String)>,
}

impl MrpEdge {
    pub fn new(source: usize, target: usize, label: impl Into<String>) -> Self {
        MrpEdge {
            source,
            target,
            label: Some(label.into()),
            attributes: Vec::new(),
        }
    }

    pub fn is_remote(&self) -> bool {
        self.attributes
            .iter()
            .any(|(n, v)| n == "remote" && v == "true")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MrpGraph {
    pub id: String,
    pub flavor: u8,
    pub framework: Framework,
    pub version: Option<Value>,
    pub time: Option<String>,
    pub input: String,
    pub tops: Vec<usize>,
    pub nodes: Vec<MrpNode>,
    pub edges: Vec<MrpEdge>,
}

impl MrpGraph {
    pub fn new(id: impl Into<String>, framework: Framework, input: impl Into<String>) -> Self {
        MrpGraph {
            id: id.into(),
            flavor: framework.flavor(),
            framework,
            version: None,
            time: None,
            input: input.into(),
            tops: Vec::new(),
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn node(&self, id: usize) -> Option<&MrpNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: usize) -> Option<&mut MrpNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    /// Position of each node id in `nodes`.
    pub fn index_of(&self) -> BTreeMap<usize, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect()
    }

    pub fn next_id(&self) -> usize {
        self.nodes.iter().map(|n| n.id + 1).max().unwrap_or(0)
    }
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    id: String,
    flavor: u8,
    framework: Framework,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time: Option<String>,
    #[serde(default)]
    input: String,
    #[serde(default)]
    tops: Vec<usize>,
    #[serde(default)]
    nodes: Vec<RawNode>,
    #[serde(default)]
    edges: Vec<RawEdge>,
}

#[derive(Serialize, Deserialize)]
struct RawNode {
    id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    properties: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    values: Vec<Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    anchors: Vec<Anchor>,
}

#[derive(Serialize, Deserialize)]
struct RawEdge {
    source: usize,
    target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    values: Vec<Value>,
}

fn value_to_string(v: Value) -> String {
    match v {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

fn attribute_value(v: &str) -> Value {
    match v {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => Value::String(v.to_string()),
    }
}

fn pairs(names: Vec<String>, values: Vec<Value>, what: &str) -> std::result::Result<Vec<(String, String)>, String> {
    if names.len() != values.len() {
        return Err(format!(
            "{} {what} names but {} values",
            names.len(),
            values.len()
        ));
    }
    Ok(names
        .into_iter()
        .zip(values.into_iter().map(value_to_string))
        .collect())
}

impl TryFrom<RawGraph> for MrpGraph {
    type Error = String;

    fn try_from(raw: RawGraph) -> std::result::Result<Self, String> {
        let mut nodes = Vec::with_capacity(raw.nodes.len());
        for n in raw.nodes {
            nodes.push(MrpNode {
                id: n.id,
                label: n.label,
                properties: pairs(n.properties, n.values, "property")?,
                anchors: n.anchors,
            });
        }
        let mut edges = Vec::with_capacity(raw.edges.len());
        for e in raw.edges {
            edges.push(MrpEdge {
                source: e.source,
                target: e.target,
                label: e.label,
                attributes: pairs(e.attributes, e.values, "attribute")?,
            });
        }
        Ok(MrpGraph {
            id: raw.id,
            flavor: raw.flavor,
            framework: raw.framework,
            version: raw.version,
            time: raw.time,
            input: raw.input,
            tops: raw.tops,
            nodes,
            edges,
        })
    }
}

impl From<&MrpGraph> for RawGraph {
    fn from(g: &MrpGraph) -> Self {
        RawGraph {
            id: g.id.clone(),
            flavor: g.flavor,
            framework: g.framework,
            version: g.version.clone(),
            time: g.time.clone(),
            input: g.input.clone(),
            tops: g.tops.clone(),
            nodes: g
                .nodes
                .iter()
                .map(|n| RawNode {
                    id: n.id,
                    label: n.label.clone(),
                    properties: n.properties.iter().map(|(k, _)| k.clone()).collect(),
                    values: n
                        .properties
                        .iter()
                        .map(|(_, v)| Value::String(v.clone()))
                        .collect(),
                    anchors: n.anchors.clone(),
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|e| RawEdge {
                    source: e.source,
                    target: e.target,
                    label: e.label.clone(),
                    attributes: e.attributes.iter().map(|(k, _)| k.clone()).collect(),
                    values: e.attributes.iter().map(|(_, v)| attribute_value(v)).collect(),
                })
                .collect(),
        }
    }
}

/// Parses one MRP graph from a JSON object string.
pub fn parse_graph(line: &str) -> std::result::Result<MrpGraph, String> {
    let raw: RawGraph = serde_json::from_str(line).map_err(|e| e.to_string())?;
    MrpGraph::try_from(raw)
}

/// Reads newline-delimited MRP graphs. Blank lines are skipped; every graph
/// is validated.
pub fn read_mrp<R: BufRead>(reader: R) -> Result<Vec<MrpGraph>> {
    let mut graphs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g = parse_graph(&line).map_err(|message| Error::Parse {
            line: i + 1,
            message,
        })?;
        let violations = validate_graph(&g);
        if !violations.is_empty() {
            return Err(Error::Validation {
                id: g.id.clone(),
                message: format!("line {}: {}", i + 1, violations.join("; ")),
            });
        }
        graphs.push(g);
    }
    Ok(graphs)
}

pub fn graph_to_json(g: &MrpGraph) -> String {
    serde_json::to_string(&RawGraph::from(g)).expect("graph serializes")
}

pub fn write_mrp<'a, W, I>(graphs: I, mut out: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a MrpGraph>,
{
    for g in graphs {
        out.write_all(graph_to_json(g).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Substring by character offsets; out-of-range offsets are clamped.
pub fn char_slice(s: &str, from: usize, to: usize) -> &str {
    let mut idx = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let start = idx.clone().nth(from).unwrap_or(s.len());
    let end = idx.nth(to).unwrap_or(s.len()).max(start);
    &s[start..end]
}

/// All violated graph invariants, in a stable order.
pub fn validate_graph(g: &MrpGraph) -> Vec<String> {
    let mut out = Vec::new();
    if g.flavor != g.framework.flavor() {
        out.push(format!(
            "flavor {} does not match framework {}",
            g.flavor, g.framework
        ));
    }
    let len = char_len(&g.input);
    let mut ids = HashSet::new();
    for n in &g.nodes {
        if !ids.insert(n.id) {
            out.push(format!("duplicate node id {}", n.id));
        }
        let mut names = HashSet::new();
        for (name, _) in &n.properties {
            if !names.insert(name.as_str()) {
                out.push(format!("node {} repeats property {name}", n.id));
            }
        }
        for a in &n.anchors {
            if a.from >= a.to {
                out.push(format!("node {} has empty anchor {}:{}", n.id, a.from, a.to));
            } else if a.to > len {
                out.push(format!(
                    "node {} anchor {}:{} exceeds input length {len}",
                    n.id, a.from, a.to
                ));
            }
        }
    }
    for t in &g.tops {
        if !ids.contains(t) {
            out.push(format!("top {t} is not a node"));
        }
    }
    for e in &g.edges {
        for end in [e.source, e.target] {
            if !ids.contains(&end) {
                out.push(format!(
                    "edge {} -> {} references missing node {end}",
                    e.source, e.target
                ));
            }
        }
    }
    out
}

/// Violations rendered one per line as `<graph-id>: <message>`.
pub fn format_violations(g: &MrpGraph) -> Vec<String> {
    validate_graph(g)
        .into_iter()
        .map(|v| format!("{}: {v}", g.id))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRow {
    pub index: usize,
    pub surface: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub ne: String,
    pub anchor: Anchor,
}

pub type Companion = IndexMap<String, Vec<TokenRow>>;

/// Reads companion TSV: a `#<id>` header per sentence followed by rows of
/// `index surface lemma upos xpos [ne] from to`.
pub fn read_companion<R: BufRead>(reader: R) -> Result<Companion> {
    let mut out: Companion = IndexMap::new();
    let mut current: Option<String> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            current = None;
            continue;
        }
        if let Some(id) = line.strip_prefix('#') {
            let id = id.trim().to_string();
            if out.contains_key(&id) {
                return Err(Error::Format(format!("line {lineno}: duplicate sentence {id}")));
            }
            out.insert(id.clone(), Vec::new());
            current = Some(id);
            continue;
        }
        let id = current
            .clone()
            .ok_or_else(|| Error::Format(format!("line {lineno}: token row outside a sentence")))?;
        let cols: Vec<&str> = line.split('\t').collect();
        let (ne, from, to) = match cols.len() {
            8 => (cols[5], cols[6], cols[7]),
            7 => ("O", cols[5], cols[6]),
            n => {
                return Err(Error::Format(format!(
                    "line {lineno}: expected 7 or 8 columns, found {n}"
                )))
            }
        };
        let num = |s: &str, what: &str| {
            s.trim().parse::<usize>().map_err(|_| {
                Error::Format(format!("line {lineno}: bad {what} `{s}`"))
            })
        };
        let rows = out.get_mut(&id).expect("sentence registered");
        let index = num(cols[0], "index")?;
        if index != rows.len() {
            return Err(Error::Format(format!(
                "line {lineno}: token index {index}, expected {}",
                rows.len()
            )));
        }
        let anchor = Anchor::new(num(from, "anchor")?, num(to, "anchor")?);
        if anchor.from >= anchor.to {
            return Err(Error::Validation {
                id,
                message: format!("token {index} has empty anchor"),
            });
        }
        if let Some(prev) = rows.last() {
            if anchor.from < prev.anchor.to {
                return Err(Error::Validation {
                    id,
                    message: format!("token {index} overlaps token {}", prev.index),
                });
            }
        }
        rows.push(TokenRow {
            index,
            surface: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            ne: if ne.is_empty() { "O".to_string() } else { ne.to_string() },
            anchor,
        });
    }
    Ok(out)
}

pub fn write_companion<W: Write>(companion: &Companion, mut out: W) -> Result<()> {
    for (id, rows) in companion {
        writeln!(out, "#{id}")?;
        for t in rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.index, t.surface, t.lemma, t.upos, t.xpos, t.ne, t.anchor.from, t.anchor.to
            )?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Rebuilds the sentence string from token anchors, padding gaps with spaces.
pub fn sentence_text(tokens: &[TokenRow]) -> String {
    let mut s = String::new();
    let mut pos = 0;
    for t in tokens {
        while pos < t.anchor.from {
            s.push(' ');
            pos += 1;
        }
        s.push_str(&t.surface);
        pos += char_len(&t.surface);
    }
    s
}

/// One sentence with its tokens and every available framework graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub input: String,
    pub tokens: Vec<TokenRow>,
    pub graphs: BTreeMap<Framework, MrpGraph>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, input: impl Into<String>, tokens: Vec<TokenRow>) -> Self {
        Sentence {
            id: id.into(),
            input: input.into(),
            tokens,
            graphs: BTreeMap::new(),
        }
    }

    pub fn graph(&self, fw: Framework) -> Option<&MrpGraph> {
        self.graphs.get(&fw)
    }

    /// Token whose anchor equals `a` exactly, if any.
    pub fn token_at(&self, a: Anchor) -> Option<usize> {
        self.tokens.iter().position(|t| t.anchor == a)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    /// Joins companion tokens with graphs by sentence id. Graph inputs must
    /// agree with the token surfaces at their anchors.
    pub fn assemble(companion: Companion, graphs: Vec<MrpGraph>) -> Result<Corpus> {
        let mut by_id: IndexMap<String, Sentence> = companion
            .into_iter()
            .map(|(id, tokens)| {
                let input = sentence_text(&tokens);
                (id.clone(), Sentence::new(id, input, tokens))
            })
            .collect();
        for g in graphs {
            let s = by_id.get_mut(&g.id).ok_or_else(|| Error::Alignment {
                id: g.id.clone(),
                message: "graph has no companion tokens".into(),
            })?;
            for t in &s.tokens {
                let seen = char_slice(&g.input, t.anchor.from, t.anchor.to);
                if seen != t.surface {
                    return Err(Error::Alignment {
                        id: g.id.clone(),
                        message: format!(
                            "token {} `{}` does not match input `{seen}`",
                            t.index, t.surface
                        ),
                    });
                }
            }
            s.input = g.input.clone();
            s.graphs.insert(g.framework, g);
        }
        Ok(Corpus {
            sentences: by_id.into_values().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn graphs(&self, fw: Framework) -> impl Iterator<Item = &MrpGraph> {
        self.sentences.iter().filter_map(move |s| s.graph(fw))
    }

    pub fn companion(&self) -> Companion {
        self.sentences
            .iter()
            .map(|s| (s.id.clone(), s.tokens.clone()))
            .collect()
    }

    pub fn all_graphs(&self) -> Vec<MrpGraph> {
        self.sentences
            .iter()
            .flat_map(|s| s.graphs.values().cloned())
            .collect()
    }
}

/// A UCCA terminal node and the tokens `[start, end)` it covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TerminalSpan {
    pub node: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UccaAlignment {
    Aligned(Vec<TerminalSpan>),
    Discrepant(String),
}

impl UccaAlignment {
    pub fn spans(&self) -> Option<&[TerminalSpan]> {
        match self {
            UccaAlignment::Aligned(s) => Some(s),
            UccaAlignment::Discrepant(_) => None,
        }
    }
}

/// Maps every anchored (terminal) node to the contiguous tokens it covers.
/// A terminal that starts or ends inside a token, or overlaps another
/// terminal, flags the whole graph.
pub fn align_ucca_tokens(g: &MrpGraph, tokens: &[TokenRow]) -> UccaAlignment {
    let mut spans = Vec::new();
    for n in g.nodes.iter().filter(|n| !n.anchors.is_empty()) {
        let from = n.anchors.iter().map(|a| a.from).min().expect("anchored");
        let to = n.anchors.iter().map(|a| a.to).max().expect("anchored");
        let start = tokens.iter().position(|t| t.anchor.from == from);
        let last = tokens.iter().position(|t| t.anchor.to == to);
        match (start, last) {
            (Some(s), Some(l)) if s <= l => spans.push(TerminalSpan {
                node: n.id,
                start: s,
                end: l + 1,
            }),
            _ => {
                return UccaAlignment::Discrepant(format!(
                    "terminal {} anchor {from}:{to} does not fall on token boundaries",
                    n.id
                ))
            }
        }
    }
    spans.sort_by_key(|s| (s.start, s.end));
    for w in spans.windows(2) {
        if w[1].start < w[0].end {
            return UccaAlignment::Discrepant(format!(
                "terminals {} and {} overlap",
                w[0].node, w[1].node
            ));
        }
    }
    UccaAlignment::Aligned(spans)
}
