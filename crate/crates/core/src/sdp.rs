//! DM and PSD specifics: frame prediction, the joint loss, lexicon-driven
//! frame reconstruction and node labelling.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unimrp_tensor::{ParamStore, Tape, Tensor, Var};

use crate::biaffine::{Flavor0Decode, GoldArcs};
use crate::error::{Error, Result};
use crate::graph::{Framework, MrpEdge, MrpGraph, MrpNode, Sentence};
use crate::nn::{Activation, Ctx, Mlp};

pub const NONE_ARG: &str = "<NONE>";
/// Argument heads cover the second through fifth arguments.
pub const ARG_HEADS: usize = 4;

/// A DM frame `type:arg1-arg2-...`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DmFrame {
    pub ty: String,
    pub args: Vec<String>,
}

impl DmFrame {
    pub fn parse(s: &str) -> Self {
        match s.split_once(':') {
            Some((ty, args)) => DmFrame {
                ty: ty.to_string(),
                args: args.split('-').filter(|a| !a.is_empty()).map(str::to_string).collect(),
            },
            None => DmFrame {
                ty: s.to_string(),
                args: Vec::new(),
            },
        }
    }

    pub fn render(&self) -> String {
        if self.args.is_empty() {
            self.ty.clone()
        } else {
            format!("{}:{}", self.ty, self.args.join("-"))
        }
    }

    /// Arguments two through five, `<NONE>` where absent.
    pub fn tail_args(&self) -> [&str; ARG_HEADS] {
        std::array::from_fn(|k| self.args.get(k + 1).map_or(NONE_ARG, String::as_str))
    }
}

/// Frame types, argument classes and the first-argument rule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameInventory {
    pub types: Vec<String>,
    /// Argument classes; index 0 is `<NONE>`.
    pub args: Vec<String>,
    /// Frame type → first argument.
    pub first_arg: BTreeMap<String, String>,
}

impl FrameInventory {
    /// Collects types and arguments from frame strings. The first argument of
    /// each type is its most frequent observed first argument (ties broken
    /// alphabetically).
    pub fn from_frames<'a>(frames: impl IntoIterator<Item = &'a str>) -> Self {
        let mut types = Vec::new();
        let mut args = vec![NONE_ARG.to_string()];
        let mut firsts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for f in frames {
            let f = DmFrame::parse(f);
            if !types.contains(&f.ty) {
                types.push(f.ty.clone());
            }
            for a in f.args.iter().skip(1) {
                if !args.contains(a) {
                    args.push(a.clone());
                }
            }
            if let Some(a) = f.args.first() {
                *firsts.entry(f.ty.clone()).or_default().entry(a.clone()).or_default() += 1;
            }
        }
        let first_arg = firsts
            .into_iter()
            .map(|(ty, counts)| {
                let best = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(a, _)| a.clone())
                    .expect("nonempty");
                (ty, best)
            })
            .collect();
        if types.is_empty() {
            types.push("_".to_string());
        }
        FrameInventory { types, args, first_arg }
    }

    /// Replaces first-argument rules with a user table of `type <TAB> arg`.
    pub fn read_first_args<R: BufRead>(&mut self, reader: R) -> Result<()> {
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (ty, arg) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!("line {}: expected `type<TAB>arg`", i + 1))
            })?;
            self.first_arg.insert(ty.trim().to_string(), arg.trim().to_string());
        }
        Ok(())
    }

    pub fn type_index(&self, ty: &str) -> Option<usize> {
        self.types.iter().position(|t| t == ty)
    }

    pub fn arg_index(&self, a: &str) -> Option<usize> {
        self.args.iter().position(|x| x == a)
    }

    /// Builds a frame from a type and tail arguments, inferring the first.
    pub fn assemble(&self, ty: &str, tail: &[&str]) -> DmFrame {
        let mut args = Vec::new();
        if let Some(first) = self.first_arg.get(ty) {
            args.push(first.clone());
            for a in tail {
                if *a == NONE_ARG {
                    break;
                }
                args.push(a.to_string());
            }
        }
        DmFrame {
            ty: ty.to_string(),
            args,
        }
    }
}

/// Frame type and argument classifiers, one MLP each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameHead {
    pub type_mlp: Mlp,
    pub arg_mlps: Vec<Mlp>,
    pub input_dropout: f64,
}

/// Per-node distributions (rows are sequence positions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub types: Tensor,
    pub args: Vec<Tensor>,
}

impl FramePrediction {
    pub fn average(members: &[&FramePrediction]) -> FramePrediction {
        let k = members.len() as f64;
        let mean = |get: &dyn Fn(&FramePrediction) -> &Tensor| {
            let mut t = Tensor::zeros(get(members[0]).rows(), get(members[0]).cols());
            for m in members {
                t.add_assign(get(m));
            }
            if members.len() > 1 {
                t.scale_assign(1.0 / k);
            }
            t
        };
        FramePrediction {
            types: mean(&|m| &m.types),
            args: (0..members[0].args.len()).map(|a| mean(&|m| &m.args[a])).collect(),
        }
    }
}

/// Gold frame of one node: position, type index and four argument indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldFrame {
    pub pos: usize,
    pub ty: usize,
    pub args: [usize; ARG_HEADS],
}

impl FrameHead {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        inventory: &FrameInventory,
        act: Activation,
        dropout: f64,
        input_dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        FrameHead {
            type_mlp: Mlp::new(store, &format!("{name}.type"), input, hidden, inventory.types.len(), act, dropout, rng),
            arg_mlps: (0..ARG_HEADS)
                .map(|k| {
                    Mlp::new(store, &format!("{name}.arg{}", k + 2), input, hidden, inventory.args.len(), act, dropout, rng)
                })
                .collect(),
            input_dropout,
        }
    }

    /// Type logits and four argument logit matrices.
    pub fn logits(&self, tape: &mut Tape, states: Var, ctx: &mut Ctx) -> Result<(Var, Vec<Var>)> {
        let x = ctx.dropout(tape, states, self.input_dropout)?;
        let ty = self.type_mlp.forward(tape, x, ctx)?;
        let args = self
            .arg_mlps
            .iter()
            .map(|m| m.forward(tape, x, ctx))
            .collect::<Result<Vec<_>>>()?;
        Ok((ty, args))
    }

    pub fn predict(&self, tape: &mut Tape, states: Var, ctx: &mut Ctx) -> Result<FramePrediction> {
        let (ty, args) = self.logits(tape, states, ctx)?;
        let ty = tape.softmax(ty);
        let args: Vec<Tensor> = args
            .into_iter()
            .map(|a| {
                let s = tape.softmax(a);
                tape.value(s).clone()
            })
            .collect();
        Ok(FramePrediction {
            types: tape.value(ty).clone(),
            args,
        })
    }

    /// Mean over framed nodes of type cross-entropy plus the four argument
    /// cross-entropies.
    pub fn loss(&self, tape: &mut Tape, states: Var, gold: &[GoldFrame], ctx: &mut Ctx) -> Result<Var> {
        if gold.is_empty() {
            return Ok(tape.scalar(0.0));
        }
        let (ty, args) = self.logits(tape, states, ctx)?;
        let rows: Vec<usize> = gold.iter().map(|g| g.pos).collect();
        let ty = tape.gather_rows(ty, &rows)?;
        let targets: Vec<usize> = gold.iter().map(|g| g.ty).collect();
        let mut terms = vec![(1.0, tape.cross_entropy(ty, &targets, None)?)];
        for (k, a) in args.into_iter().enumerate() {
            let a = tape.gather_rows(a, &rows)?;
            let targets: Vec<usize> = gold.iter().map(|g| g.args[k]).collect();
            terms.push((1.0, tape.cross_entropy(a, &targets, None)?));
        }
        let total = tape.lin_comb(&terms)?;
        Ok(tape.scale(total, 1.0 / gold.len() as f64))
    }
}

/// λ^label and λ^frame of the joint DM/PSD objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpLossWeights {
    pub label: f64,
    pub frame: f64,
}

impl Default for SdpLossWeights {
    fn default() -> Self {
        SdpLossWeights {
            label: 0.0210,
            frame: 0.5,
        }
    }
}

/// Component losses of one flavor-0 framework.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SdpParts<T> {
    pub edge: T,
    pub label: T,
    /// DM only.
    pub frame: Option<T>,
}

impl SdpLossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.label) {
            return Err(Error::config(format!("λ_label = {} outside [0, 1]", self.label)));
        }
        Ok(())
    }

    /// Coefficients of (edge, label, frame) in
    /// `λ_label(ℓ^label + λ_frame ℓ^frame) + (1 − λ_label) ℓ^edge`.
    pub fn coefficients(&self) -> [f64; 3] {
        [1.0 - self.label, self.label, self.label * self.frame]
    }

    pub fn combine(&self, parts: &[SdpParts<f64>]) -> f64 {
        let [ce, cl, cf] = self.coefficients();
        parts
            .iter()
            .map(|p| ce * p.edge + cl * p.label + cf * p.frame.unwrap_or(0.0))
            .sum()
    }

    pub fn combine_tape(&self, tape: &mut Tape, parts: &[SdpParts<Var>]) -> Result<Var> {
        let [ce, cl, cf] = self.coefficients();
        let mut terms = Vec::new();
        for p in parts {
            terms.push((ce, p.edge));
            terms.push((cl, p.label));
            if let Some(f) = p.frame {
                terms.push((cf, f));
            }
        }
        Ok(tape.lin_comb(&terms)?)
    }
}

/// `ℓ = λ_label(ℓ^label_dm + ℓ^label_psd + λ_frame ℓ^frame_dm) + (1 − λ_label)(ℓ^edge_dm + ℓ^edge_psd)`.
pub fn sdp_joint_loss(dm: SdpParts<f64>, psd: SdpParts<f64>, w: SdpLossWeights) -> Result<f64> {
    w.validate()?;
    Ok(w.combine(&[dm, psd]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexEntry {
    pub frame: String,
    /// Required arguments (PSD functors); empty for DM.
    pub args: Vec<String>,
    pub freq: f64,
}

/// Candidate frames per lemma (and optionally POS).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameLexicon {
    entries: BTreeMap<String, BTreeMap<String, Vec<LexEntry>>>,
}

impl FrameLexicon {
    pub fn add(&mut self, lemma: &str, pos: &str, frame: &str, args: Vec<String>, freq: f64) {
        let list = self
            .entries
            .entry(lemma.to_string())
            .or_default()
            .entry(pos.to_string())
            .or_default();
        match list.iter_mut().find(|e| e.frame == frame) {
            Some(e) => e.freq += freq,
            None => list.push(LexEntry {
                frame: frame.to_string(),
                args,
                freq,
            }),
        }
    }

    /// Reads `lemma <TAB> pos <TAB> frame <TAB> args <TAB> freq`; `pos` may be
    /// empty and `args` is a comma-separated list (or empty / `-`).
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lex = FrameLexicon::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let (lemma, pos, frame, args, freq) = match cols.as_slice() {
                [l, p, f, a, q] => (*l, *p, *f, *a, *q),
                [l, f, a, q] => (*l, "", *f, *a, *q),
                _ => {
                    return Err(Error::Format(format!(
                        "line {}: expected 5 lexicon columns, found {}",
                        i + 1,
                        cols.len()
                    )))
                }
            };
            let freq: f64 = freq.trim().parse().map_err(|_| {
                Error::Format(format!("line {}: bad frequency `{freq}`", i + 1))
            })?;
            if freq < 0.0 {
                return Err(Error::Format(format!("line {}: negative frequency", i + 1)));
            }
            let args = args
                .split(',')
                .map(str::trim)
                .filter(|a| !a.is_empty() && *a != "-")
                .map(str::to_string)
                .collect();
            lex.add(lemma.trim(), pos.trim(), frame.trim(), args, freq);
        }
        Ok(lex)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (lemma, by_pos) in &self.entries {
            for (pos, list) in by_pos {
                for e in list {
                    s.push_str(&format!("{lemma}\t{pos}\t{}\t{}\t{}\n", e.frame, e.args.join(","), e.freq));
                }
            }
        }
        s
    }

    /// Entries for `(lemma, pos)`; when none match that POS, the entries of
    /// every POS of the lemma.
    pub fn candidates(&self, lemma: &str, pos: &str) -> Vec<&LexEntry> {
        let Some(by_pos) = self.entries.get(lemma) else {
            return Vec::new();
        };
        if let Some(list) = by_pos.get(pos).filter(|l| !l.is_empty()) {
            return list.iter().collect();
        }
        let mut out: Vec<&LexEntry> = Vec::new();
        for list in by_pos.values() {
            for e in list {
                if !out.iter().any(|o| o.frame == e.frame) {
                    out.push(e);
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Probability the heads assign to `frame` at row `pos`.
pub fn joint_probability(pred: &FramePrediction, pos: usize, inv: &FrameInventory, frame: &DmFrame) -> f64 {
    let Some(t) = inv.type_index(&frame.ty) else { return 0.0 };
    let mut p = pred.types.get(pos, t);
    for (k, a) in frame.tail_args().iter().enumerate() {
        match inv.arg_index(a) {
            Some(ai) => p *= pred.args[k].get(pos, ai),
            None => return 0.0,
        }
    }
    p
}

/// Picks the DM frame for the node at `pos`. Lexicon candidates are scored by
/// joint probability times relative frequency; without candidates the
/// unconstrained argmax of every head is used.
pub fn reconstruct_dm_frame(
    pred: &FramePrediction,
    pos: usize,
    lemma: &str,
    tag: &str,
    lexicon: &FrameLexicon,
    inv: &FrameInventory,
) -> String {
    let cands = lexicon.candidates(lemma, tag);
    if cands.is_empty() {
        let ty = &inv.types[pred.types.argmax_row(pos)];
        let tail: Vec<&str> = pred.args.iter().map(|a| inv.args[a.argmax_row(pos)].as_str()).collect();
        return inv.assemble(ty, &tail).render();
    }
    let total: f64 = cands.iter().map(|e| e.freq).sum();
    let mut best: Option<(f64, f64, &LexEntry)> = None;
    for e in &cands {
        let rel = if total > 0.0 { e.freq / total } else { 1.0 / cands.len() as f64 };
        let score = joint_probability(pred, pos, inv, &DmFrame::parse(&e.frame)) * rel;
        let better = match best {
            None => true,
            Some((bs, bf, _)) => score > bs || (score == bs && e.freq > bf),
        };
        if better {
            best = Some((score, e.freq, e));
        }
    }
    best.expect("candidates nonempty").2.frame.clone()
}

/// `ACT-arg` → `ACT`.
pub fn strip_suffix(label: &str) -> &str {
    label.split('-').next().unwrap_or(label)
}

/// Most frequent PSD frame whose required arguments all appear among the
/// outgoing edge labels (suffixes stripped); falls back to the most frequent
/// candidate. `None` when the lexicon has no entry.
pub fn reconstruct_psd_frame(lemma: &str, tag: &str, outgoing: &[&str], lexicon: &FrameLexicon) -> Option<String> {
    let cands = lexicon.candidates(lemma, tag);
    let stripped: Vec<&str> = outgoing.iter().map(|l| strip_suffix(l)).collect();
    let most_frequent = |list: &[&LexEntry]| -> Option<String> {
        let mut best: Option<&LexEntry> = None;
        for e in list {
            if best.is_none_or(|b| e.freq > b.freq) {
                best = Some(e);
            }
        }
        best.map(|e| e.frame.clone())
    };
    let survivors: Vec<&LexEntry> = cands
        .iter()
        .copied()
        .filter(|e| e.args.iter().all(|a| stripped.contains(&a.as_str())))
        .collect();
    most_frequent(&survivors).or_else(|| most_frequent(&cands))
}

/// `(surface, POS)` → special PSD node label such as `#PersPron`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpecialLabelTable {
    entries: BTreeMap<String, BTreeMap<String, String>>,
}

impl SpecialLabelTable {
    /// Reads `surface <TAB> pos <TAB> label`.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut t = SpecialLabelTable::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with("//") {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [surface, pos, label] = cols.as_slice() else {
                return Err(Error::Format(format!("line {}: expected 3 columns", i + 1)));
            };
            let slot = t.entries.entry(surface.to_string()).or_default();
            if slot.insert(pos.to_string(), label.to_string()).is_some() {
                return Err(Error::Format(format!(
                    "line {}: duplicate key ({surface}, {pos})",
                    i + 1
                )));
            }
        }
        Ok(t)
    }

    pub fn insert(&mut self, surface: &str, pos: &str, label: &str) {
        self.entries
            .entry(surface.to_string())
            .or_default()
            .insert(pos.to_string(), label.to_string());
    }

    pub fn get(&self, surface: &str, pos: &str) -> Option<&str> {
        let by_pos = self
            .entries
            .get(surface)
            .or_else(|| self.entries.get(&surface.to_lowercase()))?;
        by_pos.get(pos).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Node labels for kept token positions: the lemma, or for PSD the special
/// label of a matching `(surface, xpos)` entry.
pub fn assign_node_labels(
    positions: &[usize],
    sentence: &Sentence,
    table: &SpecialLabelTable,
    framework: Framework,
) -> Vec<String> {
    positions
        .iter()
        .map(|&p| {
            let t = &sentence.tokens[p - 1];
            if framework == Framework::Psd {
                if let Some(l) = table.get(&t.surface, &t.xpos) {
                    return l.to_string();
                }
            }
            t.lemma.clone()
        })
        .collect()
}

/// Sequence position (token index + 1) of each node aligned to one token.
pub fn node_positions(g: &MrpGraph, sentence: &Sentence) -> HashMap<usize, usize> {
    let mut out = HashMap::new();
    for n in &g.nodes {
        let (Some(from), Some(to)) = (n.anchors.iter().map(|a| a.from).min(), n.anchors.iter().map(|a| a.to).max()) else {
            continue;
        };
        if let Some(k) = sentence
            .tokens
            .iter()
            .position(|t| t.anchor.from == from && t.anchor.to == to)
        {
            out.insert(n.id, k + 1);
        }
    }
    out
}

/// Gold arcs of a flavor-0 graph over sequence positions. Edges whose label is
/// not in `labels` are dropped.
pub fn gold_arcs(g: &MrpGraph, sentence: &Sentence, labels: &[String]) -> GoldArcs {
    let pos = node_positions(g, sentence);
    GoldArcs {
        n: sentence.tokens.len() + 1,
        tops: g.tops.iter().filter_map(|t| pos.get(t).copied()).collect(),
        edges: g
            .edges
            .iter()
            .filter_map(|e| {
                let l = labels.iter().position(|x| Some(x.as_str()) == e.label.as_deref())?;
                Some((*pos.get(&e.source)?, *pos.get(&e.target)?, l))
            })
            .collect(),
    }
}

/// Gold DM frames by sequence position.
pub fn gold_frames(g: &MrpGraph, sentence: &Sentence, inv: &FrameInventory) -> Vec<GoldFrame> {
    let pos = node_positions(g, sentence);
    let mut out: Vec<GoldFrame> = g
        .nodes
        .iter()
        .filter_map(|n| {
            let p = *pos.get(&n.id)?;
            let f = DmFrame::parse(n.property("frame")?);
            let ty = inv.type_index(&f.ty)?;
            let tail = f.tail_args();
            let mut args = [0; ARG_HEADS];
            for k in 0..ARG_HEADS {
                args[k] = inv.arg_index(tail[k]).unwrap_or(0);
            }
            Some(GoldFrame { pos: p, ty, args })
        })
        .collect();
    out.sort_by_key(|g| g.pos);
    out
}

/// Lexicon resources used when assembling DM/PSD output graphs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpResources {
    pub dm_lexicon: FrameLexicon,
    pub psd_lexicon: FrameLexicon,
    pub special: SpecialLabelTable,
    pub frames: FrameInventory,
}

impl SdpResources {
    /// Lexicons counted from training graphs: DM frames by lemma and POS,
    /// PSD frames with the stripped labels of their outgoing edges as
    /// required arguments.
    pub fn from_training<'a>(pairs: impl IntoIterator<Item = (&'a Sentence, &'a MrpGraph)>) -> Self {
        let mut res = SdpResources::default();
        let mut dm_frames = Vec::new();
        for (s, g) in pairs {
            let pos = node_positions(g, s);
            for n in &g.nodes {
                let (Some(frame), Some(&p)) = (n.property("frame"), pos.get(&n.id)) else {
                    continue;
                };
                let t = &s.tokens[p - 1];
                match g.framework {
                    Framework::Dm => {
                        res.dm_lexicon.add(&t.lemma, &t.xpos, frame, Vec::new(), 1.0);
                        dm_frames.push(frame.to_string());
                    }
                    Framework::Psd => {
                        let mut args: Vec<String> = g
                            .edges
                            .iter()
                            .filter(|e| e.source == n.id)
                            .filter_map(|e| e.label.as_deref().map(|l| strip_suffix(l).to_string()))
                            .collect();
                        args.sort();
                        args.dedup();
                        res.psd_lexicon.add(&t.lemma, &t.xpos, frame, args, 1.0);
                    }
                    _ => {}
                }
            }
        }
        res.frames = FrameInventory::from_frames(dm_frames.iter().map(String::as_str));
        res
    }
}

/// Assembles a DM or PSD graph from a decode. Node ids are token indices.
pub fn build_graph(
    sentence: &Sentence,
    framework: Framework,
    decode: &Flavor0Decode,
    labels: &[String],
    frames: Option<&FramePrediction>,
    res: &SdpResources,
) -> MrpGraph {
    let mut g = MrpGraph::new(sentence.id.clone(), framework, sentence.input.clone());
    let node_labels = assign_node_labels(&decode.nodes, sentence, &res.special, framework);
    for (&p, label) in decode.nodes.iter().zip(node_labels) {
        let t = &sentence.tokens[p - 1];
        let mut n = MrpNode::labeled(p - 1, label);
        n.anchors.push(t.anchor);
        n.set_property("pos", t.xpos.clone());
        let frame = match framework {
            Framework::Dm => frames.map(|f| reconstruct_dm_frame(f, p, &t.lemma, &t.xpos, &res.dm_lexicon, &res.frames)),
            _ => {
                let outgoing: Vec<&str> = decode
                    .edges
                    .iter()
                    .filter(|e| e.0 == p)
                    .map(|e| labels[e.2].as_str())
                    .collect();
                reconstruct_psd_frame(&t.lemma, &t.xpos, &outgoing, &res.psd_lexicon)
            }
        };
        if let Some(f) = frame {
            n.set_property("frame", f);
        }
        g.nodes.push(n);
    }
    g.tops = decode.tops.iter().map(|p| p - 1).collect();
    g.edges = decode
        .edges
        .iter()
        .map(|&(i, j, l)| MrpEdge::new(i - 1, j - 1, labels[l].clone()))
        .collect();
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_parsing() {
        let f = DmFrame::parse("named:x-c");
        assert_eq!(f.ty, "named");
        assert_eq!(f.args, vec!["x", "c"]);
        assert_eq!(f.tail_args(), ["c", NONE_ARG, NONE_ARG, NONE_ARG]);
        assert_eq!(f.render(), "named:x-c");
    }

    #[test]
    fn first_argument_is_inferred() {
        let inv = FrameInventory::from_frames(["v:e-i-p", "v:e-i", "n:x"]);
        assert_eq!(inv.first_arg["v"], "e");
        assert_eq!(inv.assemble("v", &["i", "p", NONE_ARG, NONE_ARG]).render(), "v:e-i-p");
        assert_eq!(inv.assemble("n", &[NONE_ARG; 4]).render(), "n:x");
    }

    #[test]
    fn suffix_stripping() {
        assert_eq!(strip_suffix("ACT-arg"), "ACT");
        assert_eq!(strip_suffix("PAT"), "PAT");
    }
}
