//! A small generated corpus with graphs in every framework, for smoke tests,
//! overfitting checks and benchmarks.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{ContextualEmbeddings, StaticEmbeddings, ROOT_TOKEN};
use crate::error::Result;
use crate::graph::{read_companion, read_mrp, write_companion, write_mrp, Anchor, Corpus, Framework, MrpEdge, MrpGraph, MrpNode, TokenRow};
use crate::model::Embeddings;

const NOUNS: [&str; 8] = ["cat", "dog", "bird", "child", "teacher", "farmer", "horse", "book"];
const ADJS: [&str; 5] = ["small", "big", "old", "happy", "red"];
const VERBS: [(&str, &str); 5] = [("chased", "chase"), ("saw", "see"), ("liked", "like"), ("found", "find"), ("helped", "help")];
const NAMES: [(&str, &str); 4] = [("John", "Smith"), ("Mary", "Jones"), ("Anna", "Berg"), ("Peter", "Hall")];
const DETS: [&str; 2] = ["the", "a"];

#[derive(Clone, Debug)]
struct Np {
    det: Option<usize>,
    adj: Option<usize>,
    first: Option<usize>,
    head: usize,
}

impl Np {
    fn start(&self) -> usize {
        self.det.or(self.adj).or(self.first).unwrap_or(self.head)
    }

    fn is_name(&self) -> bool {
        self.first.is_some()
    }
}

#[derive(Clone, Debug)]
struct Clause {
    subj: Np,
    want: Option<usize>,
    to: Option<usize>,
    verb: usize,
    obj: Np,
    stop: usize,
    remote: bool,
}

struct Builder {
    tokens: Vec<TokenRow>,
    pos: usize,
}

impl Builder {
    fn push(&mut self, surface: &str, lemma: &str, upos: &str, xpos: &str, ne: &str) -> usize {
        if !self.tokens.is_empty() {
            self.pos += 1;
        }
        let from = self.pos;
        self.pos += surface.chars().count();
        self.tokens.push(TokenRow {
            index: self.tokens.len(),
            surface: surface.into(),
            lemma: lemma.into(),
            upos: upos.into(),
            xpos: xpos.into(),
            ne: ne.into(),
            anchor: Anchor::new(from, self.pos),
        });
        self.tokens.len() - 1
    }

    fn np(&mut self, rng: &mut ChaCha8Rng, allow_name: bool) -> Np {
        if allow_name && rng.random_bool(0.35) {
            let (f, l) = NAMES[rng.random_range(0..NAMES.len())];
            let first = self.push(f, f, "PROPN", "NNP", "B-PER");
            let head = self.push(l, l, "PROPN", "NNP", "I-PER");
            return Np {
                det: None,
                adj: None,
                first: Some(first),
                head,
            };
        }
        let det = rng.random_bool(0.8).then(|| {
            let d = DETS[rng.random_range(0..DETS.len())];
            self.push(d, d, "DET", "DT", "O")
        });
        let adj = rng.random_bool(0.4).then(|| {
            let a = ADJS[rng.random_range(0..ADJS.len())];
            self.push(a, a, "ADJ", "JJ", "O")
        });
        let n = NOUNS[rng.random_range(0..NOUNS.len())];
        let head = self.push(n, n, "NOUN", "NN", "O");
        Np {
            det,
            adj,
            first: None,
            head,
        }
    }
}

fn clause(rng: &mut ChaCha8Rng) -> (Vec<TokenRow>, Clause) {
    let mut b = Builder {
        tokens: Vec::new(),
        pos: 0,
    };
    let subj = b.np(rng, true);
    let (past, base) = VERBS[rng.random_range(0..VERBS.len())];
    let (want, to, verb) = if rng.random_bool(0.3) {
        let w = b.push("wanted", "want", "VERB", "VBD", "O");
        let t = b.push("to", "to", "PART", "TO", "O");
        let v = b.push(base, base, "VERB", "VB", "O");
        (Some(w), Some(t), v)
    } else {
        (None, None, b.push(past, base, "VERB", "VBD", "O"))
    };
    let obj = b.np(rng, false);
    let stop = b.push(".", ".", "PUNCT", ".", "O");
    let remote = !subj.is_name() && rng.random_bool(0.3);
    (
        b.tokens,
        Clause {
            subj,
            want,
            to,
            verb,
            obj,
            stop,
            remote,
        },
    )
}

fn token_node(id: usize, t: &TokenRow, props: &[(&str, &str)]) -> MrpNode {
    let mut n = MrpNode::labeled(id, t.lemma.clone());
    n.anchors.push(t.anchor);
    for (k, v) in props {
        n.set_property(k, *v);
    }
    n
}

fn dm_graph(id: &str, input: &str, toks: &[TokenRow], c: &Clause) -> MrpGraph {
    let mut g = MrpGraph::new(id, Framework::Dm, input);
    let frame = |k: usize| -> &'static str {
        match toks[k].upos.as_str() {
            "DET" => "q:i-h-h",
            "ADJ" => "a:e-p",
            "PROPN" => "named:x-c",
            "VERB" if Some(k) == c.want => "v:e-i-h",
            "VERB" => "v:e-i-p",
            _ => "n:x",
        }
    };
    for (k, t) in toks.iter().enumerate() {
        if k == c.stop || Some(k) == c.to {
            continue;
        }
        g.nodes.push(token_node(k, t, &[("pos", &t.xpos), ("frame", frame(k))]));
    }
    for np in [&c.subj, &c.obj] {
        if let Some(d) = np.det {
            g.edges.push(MrpEdge::new(d, np.head, "BV"));
        }
        if let Some(a) = np.adj {
            g.edges.push(MrpEdge::new(a, np.head, "ARG1"));
        }
        if let Some(f) = np.first {
            g.edges.push(MrpEdge::new(np.head, f, "compound"));
        }
    }
    if let Some(w) = c.want {
        g.edges.push(MrpEdge::new(w, c.subj.head, "ARG1"));
        g.edges.push(MrpEdge::new(w, c.verb, "ARG2"));
    }
    g.edges.push(MrpEdge::new(c.verb, c.subj.head, "ARG1"));
    g.edges.push(MrpEdge::new(c.verb, c.obj.head, "ARG2"));
    g.tops = vec![c.want.unwrap_or(c.verb)];
    g
}

fn psd_graph(id: &str, input: &str, toks: &[TokenRow], c: &Clause) -> MrpGraph {
    let mut g = MrpGraph::new(id, Framework::Psd, input);
    let verb_index = |lemma: &str| VERBS.iter().position(|v| v.1 == lemma).unwrap_or(VERBS.len());
    for (k, t) in toks.iter().enumerate() {
        if k == c.stop || Some(k) == c.to || t.upos == "DET" {
            continue;
        }
        let mut n = token_node(k, t, &[("pos", &t.xpos)]);
        if t.upos == "VERB" {
            n.set_property("frame", format!("ev-w{}f1", 100 + verb_index(&t.lemma)));
        }
        g.nodes.push(n);
    }
    for np in [&c.subj, &c.obj] {
        if let Some(a) = np.adj {
            g.edges.push(MrpEdge::new(np.head, a, "RSTR"));
        }
        if let Some(f) = np.first {
            g.edges.push(MrpEdge::new(np.head, f, "NE"));
        }
    }
    if let Some(w) = c.want {
        g.edges.push(MrpEdge::new(w, c.subj.head, "ACT-arg"));
        g.edges.push(MrpEdge::new(w, c.verb, "PAT-arg"));
    }
    g.edges.push(MrpEdge::new(c.verb, c.subj.head, "ACT-arg"));
    g.edges.push(MrpEdge::new(c.verb, c.obj.head, "PAT-arg"));
    g.tops = vec![c.want.unwrap_or(c.verb)];
    g
}

fn ucca_graph(id: &str, input: &str, toks: &[TokenRow], c: &Clause) -> MrpGraph {
    let mut g = MrpGraph::new(id, Framework::Ucca, input);
    // Terminals take ids by token; a name becomes one terminal over both
    // tokens.
    let mut term_of = vec![usize::MAX; toks.len()];
    for (k, t) in toks.iter().enumerate() {
        if c.subj.first.is_some_and(|f| f + 1 == k) {
            let n = g.nodes.last_mut().expect("first name pushed");
            n.anchors = vec![Anchor::new(n.anchors[0].from, t.anchor.to)];
            term_of[k] = term_of[k - 1];
            continue;
        }
        let mut n = MrpNode::new(g.nodes.len());
        n.anchors.push(t.anchor);
        term_of[k] = n.id;
        g.nodes.push(n);
    }
    let unit = |g: &mut MrpGraph| {
        let id = g.next_id();
        g.nodes.push(MrpNode::new(id));
        id
    };
    let root = unit(&mut g);
    let np_unit = |g: &mut MrpGraph, np: &Np| {
        let u = unit(g);
        if let Some(d) = np.det {
            g.edges.push(MrpEdge::new(u, term_of[d], "E"));
        }
        if let Some(a) = np.adj {
            g.edges.push(MrpEdge::new(u, term_of[a], "E"));
        }
        g.edges.push(MrpEdge::new(u, term_of[np.head], "C"));
        u
    };
    let subj = np_unit(&mut g, &c.subj);
    g.edges.push(MrpEdge::new(root, subj, "A"));
    if let (Some(w), Some(t)) = (c.want, c.to) {
        g.edges.push(MrpEdge::new(root, term_of[w], "D"));
        g.edges.push(MrpEdge::new(root, term_of[t], "F"));
    }
    g.edges.push(MrpEdge::new(root, term_of[c.verb], "P"));
    let obj = np_unit(&mut g, &c.obj);
    g.edges.push(MrpEdge::new(root, obj, "A"));
    g.edges.push(MrpEdge::new(root, term_of[c.stop], "U"));
    if c.remote {
        let mut e = MrpEdge::new(obj, subj, "A");
        e.attributes.push(("remote".into(), "true".into()));
        g.edges.push(e);
    }
    g.tops = vec![root];
    g
}

fn amr_graph(id: &str, input: &str, toks: &[TokenRow], c: &Clause) -> MrpGraph {
    let mut g = MrpGraph::new(id, Framework::Amr, input);
    let add = |g: &mut MrpGraph, label: String| {
        let id = g.nodes.len();
        g.nodes.push(MrpNode::labeled(id, label));
        id
    };
    let main = c.want.map(|_| add(&mut g, "want-01".into()));
    let verb = add(&mut g, format!("{}-01", toks[c.verb].lemma));
    let np_node = |g: &mut MrpGraph, np: &Np| {
        if let Some(f) = np.first {
            let p = add(g, "person".into());
            let n = add(g, "name".into());
            let node = g.node_mut(n).expect("added");
            node.set_property("op1", toks[f].surface.clone());
            node.set_property("op2", toks[np.head].surface.clone());
            g.edges.push(MrpEdge::new(p, n, "name"));
            return p;
        }
        let h = add(g, toks[np.head].lemma.clone());
        if let Some(a) = np.adj {
            let m = add(g, toks[a].lemma.clone());
            g.edges.push(MrpEdge::new(h, m, "mod"));
        }
        h
    };
    let subj = np_node(&mut g, &c.subj);
    let obj = np_node(&mut g, &c.obj);
    if let Some(w) = main {
        g.edges.push(MrpEdge::new(w, subj, "ARG0"));
        g.edges.push(MrpEdge::new(w, verb, "ARG1"));
    }
    g.edges.push(MrpEdge::new(verb, subj, "ARG0"));
    g.edges.push(MrpEdge::new(verb, obj, "ARG1"));
    g.tops = vec![main.unwrap_or(verb)];
    g
}

fn eds_graph(dm: &MrpGraph, toks: &[TokenRow], c: &Clause) -> MrpGraph {
    let rules = crate::eds::ConversionRuleSet::default();
    let mut g = crate::eds::dm_to_eds_surface(dm, &rules).graph;
    let surface_of = |k: usize| dm.nodes.iter().position(|n| n.id == k).expect("token node");
    for np in [&c.subj, &c.obj] {
        let label = if np.is_name() {
            "proper_q"
        } else if np.det.is_none() {
            "udef_q"
        } else {
            continue;
        };
        let id = g.next_id();
        let mut n = MrpNode::labeled(id, label);
        n.anchors.push(Anchor::new(toks[np.start()].anchor.from, toks[np.head].anchor.to));
        g.nodes.push(n);
        g.edges.push(MrpEdge::new(id, surface_of(np.head), "BV"));
    }
    g
}

/// `n` sentences with DM, PSD, EDS, UCCA and AMR graphs.
pub fn corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut companion = IndexMap::new();
    let mut graphs = Vec::new();
    for k in 0..n {
        let id = format!("s{k:04}");
        let (toks, c) = clause(&mut rng);
        let input = crate::graph::sentence_text(&toks);
        let dm = dm_graph(&id, &input, &toks, &c);
        graphs.push(eds_graph(&dm, &toks, &c));
        graphs.push(psd_graph(&id, &input, &toks, &c));
        graphs.push(ucca_graph(&id, &input, &toks, &c));
        graphs.push(amr_graph(&id, &input, &toks, &c));
        graphs.push(dm);
        companion.insert(id, toks);
    }
    Corpus::assemble(companion, graphs).expect("generated graphs align with their tokens")
}

/// Hashed static and contextual vectors for every token of `corpus`.
pub fn embeddings(corpus: &Corpus, static_dim: usize, ctx_layers: usize, ctx_width: usize, seed: u64) -> Embeddings {
    let mut words: Vec<&str> = corpus
        .sentences
        .iter()
        .flat_map(|s| s.tokens.iter().map(|t| t.surface.as_str()))
        .collect();
    words.push(ROOT_TOKEN);
    words.sort();
    words.dedup();
    Embeddings {
        statics: (static_dim > 0).then(|| StaticEmbeddings::synthetic(words, static_dim, seed)),
        contextual: (ctx_layers > 0 && ctx_width > 0)
            .then(|| ContextualEmbeddings::synthetic(&corpus.sentences, ctx_layers, ctx_width, seed)),
    }
}

/// Paths of a corpus written by [`write_files`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticFiles {
    pub companion: PathBuf,
    pub graphs: PathBuf,
    pub statics: Option<PathBuf>,
    pub contextual: Option<PathBuf>,
}

/// Writes the companion tokens, graphs and embeddings under `dir`.
pub fn write_files(dir: &Path, corpus: &Corpus, emb: &Embeddings) -> Result<SyntheticFiles> {
    std::fs::create_dir_all(dir)?;
    let files = SyntheticFiles {
        companion: dir.join("companion.tsv"),
        graphs: dir.join("graphs.mrp"),
        statics: emb.statics.as_ref().map(|_| dir.join("static.vec")),
        contextual: emb.contextual.as_ref().map(|_| dir.join("contextual.jsonl")),
    };
    write_companion(&corpus.companion(), BufWriter::new(File::create(&files.companion)?))?;
    let graphs = corpus.all_graphs();
    write_mrp(&graphs, BufWriter::new(File::create(&files.graphs)?))?;
    if let (Some(s), Some(p)) = (&emb.statics, &files.statics) {
        s.write(BufWriter::new(File::create(p)?))?;
    }
    if let (Some(c), Some(p)) = (&emb.contextual, &files.contextual) {
        c.write(BufWriter::new(File::create(p)?))?;
    }
    Ok(files)
}

/// Reads back what [`write_files`] wrote.
pub fn read_files(files: &SyntheticFiles, seed: u64) -> Result<(Corpus, Embeddings)> {
    let companion = read_companion(BufReader::new(File::open(&files.companion)?))?;
    let graphs = read_mrp(BufReader::new(File::open(&files.graphs)?))?;
    let corpus = Corpus::assemble(companion, graphs)?;
    let statics = match &files.statics {
        Some(p) => Some(StaticEmbeddings::read(BufReader::new(File::open(p)?), seed)?),
        None => None,
    };
    let contextual = match &files.contextual {
        Some(p) => Some(ContextualEmbeddings::read(BufReader::new(File::open(p)?))?),
        None => None,
    };
    Ok((corpus, Embeddings { statics, contextual }))
}
