//! Pointer-generator node decoder with a biaffine edge scorer.

use std::collections::BTreeMap;

use indexmap::IndexSet;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unimrp_tensor::{ParamId, ParamStore, Tape, Tensor, Var};

use super::beam::{beam_or_greedy, StepModel};
use super::cle::chu_liu_edmonds;
use super::preprocess::{postprocess_amr, AmrTree, DecodedNode, EntityLexicon, SenseTable};
use crate::biaffine::{edge_loss, label_loss, BiaffineConfig, BiaffineHead, GoldArcs};
use crate::encoder::{Encoder, EncoderOutput, SentenceFeatures, StaticEmbeddings, Vocabulary};
use crate::error::{Error, Result};
use crate::graph::{MrpGraph, TokenRow};
use crate::nn::{Ctx, Linear, Lstm, LstmState};
use unimrp_tensor::argmax;

pub const UNK_LABEL: &str = "<UNK>";
pub const EOS_LABEL: &str = "<EOS>";
const UNK_ID: usize = 0;
const EOS_ID: usize = 1;
const MASK: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmrLossWeights {
    pub biaf: f64,
    pub label: f64,
    pub cov: f64,
}

impl Default for AmrLossWeights {
    fn default() -> Self {
        AmrLossWeights {
            biaf: 0.39,
            label: 0.395,
            cov: 0.339,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmrLosses<T> {
    pub edge: T,
    pub label: T,
    pub dec: T,
    pub cov: T,
}

impl AmrLossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("biaf", self.biaf), ("label", self.label), ("cov", self.cov)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("AMR loss weight {name} = {v} outside [0, 1]")));
            }
        }
        if self.biaf + self.cov > 1.0 + 1e-12 {
            return Err(Error::config(format!(
                "AMR loss weights biaf + cov = {} exceed 1",
                self.biaf + self.cov
            )));
        }
        Ok(())
    }

    /// Coefficients of `[edge, label, dec, cov]`.
    pub fn coefficients(&self) -> [f64; 4] {
        [
            self.biaf * (1.0 - self.label),
            self.biaf * self.label,
            1.0 - self.biaf - self.cov,
            self.cov,
        ]
    }

    pub fn combine(&self, l: &AmrLosses<f64>) -> f64 {
        let [e, lb, d, c] = self.coefficients();
        e * l.edge + lb * l.label + d * l.dec + c * l.cov
    }

    pub fn combine_tape(&self, tape: &mut Tape, l: &AmrLosses<Var>) -> Result<Var> {
        let [e, lb, d, c] = self.coefficients();
        Ok(tape.lin_comb(&[(e, l.edge), (lb, l.label), (d, l.dec), (c, l.cov)])?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmrConfig {
    pub biaffine: BiaffineConfig,
    pub decoder_hidden: usize,
    pub attention_dim: usize,
    pub decoder_dropout: f64,
    pub beam_width: usize,
    pub min_label_freq: usize,
    pub weights: AmrLossWeights,
}

impl Default for AmrConfig {
    fn default() -> Self {
        AmrConfig {
            biaffine: BiaffineConfig::default(),
            decoder_hidden: 256,
            attention_dim: 128,
            decoder_dropout: 0.3,
            beam_width: 5,
            min_label_freq: 1,
            weights: AmrLossWeights::default(),
        }
    }
}

/// Node labels seen at least `min_freq` times, after `<UNK>` and `<EOS>`.
pub fn node_vocabulary<'a>(trees: impl IntoIterator<Item = &'a AmrTree>, min_freq: usize) -> Vec<String> {
    let mut counts: indexmap::IndexMap<&str, usize> = indexmap::IndexMap::new();
    for t in trees {
        for n in &t.nodes {
            *counts.entry(n.label.as_str()).or_default() += 1;
        }
    }
    let mut out = vec![UNK_LABEL.to_string(), EOS_LABEL.to_string()];
    out.extend(counts.into_iter().filter(|(l, c)| *c >= min_freq && *l != UNK_LABEL && *l != EOS_LABEL).map(|(l, _)| l.to_string()));
    out
}

/// Edge labels in first-seen order.
pub fn edge_inventory<'a>(trees: impl IntoIterator<Item = &'a AmrTree>) -> Vec<String> {
    let mut set: IndexSet<String> = IndexSet::new();
    for t in trees {
        for n in &t.nodes {
            if let Some(e) = &n.edge {
                set.insert(e.clone());
            }
        }
    }
    set.into_iter().collect()
}

/// Re-embeds generated nodes through the encoder's token path.
#[derive(Clone, Copy)]
pub struct NodeEmbedder<'a> {
    pub encoder: &'a Encoder,
    pub vocab: &'a Vocabulary,
    pub statics: Option<&'a StaticEmbeddings>,
}

impl NodeEmbedder<'_> {
    pub fn embed(&self, tape: &mut Tape, label: &str, pos: Option<(usize, usize)>) -> Result<Var> {
        let lemma = self.vocab.lemma.index(label);
        let row = self.statics.map(|s| s.lookup(label));
        self.encoder.embed_node(tape, lemma, pos, row)
    }
}

/// Everything the head reads about one sentence.
#[derive(Clone, Copy)]
pub struct AmrInput<'a> {
    pub enc: &'a EncoderOutput,
    pub features: &'a SentenceFeatures,
    pub tokens: &'a [TokenRow],
    pub embedder: NodeEmbedder<'a>,
}

impl AmrInput<'_> {
    fn pos_of(&self, token: usize) -> (usize, usize) {
        (self.features.upos[token + 1], self.features.xpos[token + 1])
    }
}

/// One generated node as fed back to the decoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrToken {
    pub label: String,
    pub replica_of: Option<usize>,
    /// Token the label was copied from, which supplies POS features.
    pub src: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmrHead {
    pub config: AmrConfig,
    pub labels: IndexSet<String>,
    pub init: Linear,
    pub decoder: Lstm,
    pub attn_dec: Linear,
    pub attn_enc: Linear,
    pub attn_v: ParamId,
    pub tgt_dec: Linear,
    pub tgt_mem: Linear,
    pub tgt_v: ParamId,
    pub vocab_out: Linear,
    pub gate: Linear,
    pub edges: BiaffineHead,
    pub node_width: usize,
}

#[derive(Clone, Copy, Debug)]
struct Memory {
    src: Var,
    src_proj: Var,
    x0: Var,
    start: LstmState,
    len: usize,
}

/// Decoder state between steps: LSTM state, node memory `(state, projection)`
/// and the coverage vector.
#[derive(Clone, Debug)]
pub struct DecState {
    lstm: LstmState,
    hist: Vec<(Var, Var)>,
    cov: Var,
}

struct StepOut {
    state: DecState,
    p: Var,
    cov_loss: Var,
}

/// Per-step outputs of a teacher-forced run.
#[derive(Clone, Debug)]
pub struct AmrRun {
    /// `1 × (L + i + V)` mixture at step `i`.
    pub steps: Vec<Var>,
    pub cov: Vec<Var>,
    /// `n × D` node states.
    pub nodes: Option<Var>,
}

/// Decoded nodes and labelled tree edges over node positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmrPrediction {
    pub tokens: Vec<AmrToken>,
    pub edges: Vec<(usize, usize, String)>,
    pub logp: f64,
}

impl AmrPrediction {
    pub fn nodes(&self) -> Vec<DecodedNode> {
        self.tokens
            .iter()
            .map(|t| DecodedNode {
                label: t.label.clone(),
                replica_of: t.replica_of,
                properties: Vec::new(),
            })
            .collect()
    }
}

impl AmrHead {
    /// `encoder_hidden` is the per-direction width of the encoder biLSTM.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cfg: &AmrConfig,
        encoder_hidden: usize,
        node_width: usize,
        labels: Vec<String>,
        edge_labels: Vec<String>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let width = 2 * encoder_hidden;
        let d = cfg.decoder_hidden;
        let a = cfg.attention_dim;
        let mut set: IndexSet<String> = [UNK_LABEL.to_string(), EOS_LABEL.to_string()].into_iter().collect();
        set.extend(labels);
        let n = |s: &str| format!("{name}.{s}");
        AmrHead {
            config: cfg.clone(),
            init: Linear::new(store, &n("init"), 4 * encoder_hidden, node_width + d, true, rng),
            decoder: Lstm::new(store, &n("decoder"), node_width, d, rng),
            attn_dec: Linear::new(store, &n("attn_dec"), d, a, false, rng),
            attn_enc: Linear::new(store, &n("attn_enc"), width, a, true, rng),
            attn_v: store.add(n("attn_v"), Tensor::glorot(a, 1, rng)),
            tgt_dec: Linear::new(store, &n("tgt_dec"), d, a, false, rng),
            tgt_mem: Linear::new(store, &n("tgt_mem"), d, a, true, rng),
            tgt_v: store.add(n("tgt_v"), Tensor::glorot(a, 1, rng)),
            vocab_out: Linear::new(store, &n("vocab"), d + width, set.len(), true, rng),
            gate: Linear::new(store, &n("gate"), d + width, 3, true, rng),
            edges: BiaffineHead::new(store, &n("edges"), d, &cfg.biaffine, edge_labels, rng),
            labels: set,
            node_width,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.labels.len()
    }

    fn memory(&self, tape: &mut Tape, inp: &AmrInput) -> Result<Memory> {
        let top = inp.enc.top();
        let len = tape.shape(top)[0] - 1;
        if len == 0 {
            return Err(Error::model("AMR decoding needs at least one token"));
        }
        let src = tape.slice_rows(top, 1, len)?;
        let src_proj = self.attn_enc.forward(tape, src)?;
        let [f, b] = *inp.enc.finals.last().ok_or_else(|| Error::model("encoder has no layers"))?;
        let v = tape.concat_cols(&[f.h, b.h, f.c, b.c])?;
        let y = self.init.forward(tape, v)?;
        let y = tape.tanh(y);
        let x0 = tape.slice_cols(y, 0, self.node_width)?;
        let h = tape.slice_cols(y, self.node_width, self.config.decoder_hidden)?;
        let c = tape.constant(Tensor::zeros(1, self.config.decoder_hidden));
        Ok(Memory {
            src,
            src_proj,
            x0,
            start: LstmState { h, c },
            len,
        })
    }

    fn initial(&self, tape: &mut Tape, mem: &Memory) -> DecState {
        DecState {
            lstm: mem.start,
            hist: Vec::new(),
            cov: tape.constant(Tensor::zeros(1, mem.len)),
        }
    }

    /// `vᵀ tanh(P + W h)` over the rows of `proj`, softmaxed into a 1×m row.
    fn attend(tape: &mut Tape, proj: Var, query: Var, v: ParamId) -> Result<Var> {
        let s = tape.add(proj, query)?;
        let s = tape.tanh(s);
        let v = tape.param(v);
        let a = tape.matmul(s, v)?;
        let a = tape.transpose(a);
        Ok(tape.softmax(a))
    }

    /// One decoder step. When `consumed` the input is a generated node, and
    /// the new state joins the node memory before target attention.
    fn step(&self, tape: &mut Tape, mem: &Memory, prev: &DecState, input: Var, consumed: bool, ctx: &mut Ctx) -> Result<StepOut> {
        let x = ctx.dropout(tape, input, self.config.decoder_dropout)?;
        let lstm = self.decoder.step(tape, x, prev.lstm)?;
        let h = lstm.h;
        let mut hist = prev.hist.clone();
        if consumed {
            let proj = self.tgt_mem.forward(tape, h)?;
            hist.push((h, proj));
        }
        let q = self.attn_dec.forward(tape, h)?;
        let a_src = Self::attend(tape, mem.src_proj, q, self.attn_v)?;
        let context = tape.matmul(a_src, mem.src)?;
        let hc = tape.concat_cols(&[h, context])?;
        let vocab = self.vocab_out.forward(tape, hc)?;
        let vocab = tape.softmax(vocab);
        let mut gate = self.gate.forward(tape, hc)?;
        if hist.is_empty() {
            let mask = tape.constant(Tensor::row(vec![0.0, MASK, 0.0]));
            gate = tape.add(gate, mask)?;
        }
        let gate = tape.softmax(gate);
        let g_src = tape.slice_cols(gate, 0, 1)?;
        let g_tgt = tape.slice_cols(gate, 1, 1)?;
        let g_voc = tape.slice_cols(gate, 2, 1)?;
        let mut parts = vec![tape.mul(a_src, g_src)?];
        if !hist.is_empty() {
            let projs: Vec<Var> = hist.iter().map(|p| p.1).collect();
            let proj = tape.concat_rows(&projs)?;
            let q = self.tgt_dec.forward(tape, h)?;
            let a_tgt = Self::attend(tape, proj, q, self.tgt_v)?;
            parts.push(tape.mul(a_tgt, g_tgt)?);
        }
        parts.push(tape.mul(vocab, g_voc)?);
        let p = tape.concat_cols(&parts)?;
        let overlap = tape.min(a_src, prev.cov)?;
        let cov_loss = tape.sum(overlap);
        let cov = tape.add(prev.cov, a_src)?;
        Ok(StepOut {
            state: DecState { lstm, hist, cov },
            p,
            cov_loss,
        })
    }

    fn node_input(&self, tape: &mut Tape, inp: &AmrInput, t: &AmrToken) -> Result<Var> {
        let pos = match (t.replica_of, t.src) {
            (None, Some(j)) => Some(inp.pos_of(j)),
            _ => None,
        };
        inp.embedder.embed(tape, &t.label, pos)
    }

    /// Runs the decoder over a fixed node sequence plus the closing step.
    pub fn run(&self, tape: &mut Tape, inp: &AmrInput, tokens: &[AmrToken], ctx: &mut Ctx) -> Result<AmrRun> {
        let mem = self.memory(tape, inp)?;
        let mut state = self.initial(tape, &mem);
        let mut steps = Vec::with_capacity(tokens.len() + 1);
        let mut cov = Vec::with_capacity(tokens.len() + 1);
        for i in 0..=tokens.len() {
            let input = if i == 0 { mem.x0 } else { self.node_input(tape, inp, &tokens[i - 1])? };
            let out = self.step(tape, &mem, &state, input, i > 0, ctx)?;
            steps.push(out.p);
            cov.push(out.cov_loss);
            state = out.state;
        }
        let reps: Vec<Var> = state.hist.iter().map(|p| p.0).collect();
        let nodes = if reps.is_empty() { None } else { Some(tape.concat_rows(&reps)?) };
        Ok(AmrRun { steps, cov, nodes })
    }

    /// Decoder inputs for a gold tree: the source token for copyable labels.
    pub fn gold_tokens(&self, tree: &AmrTree, tokens: &[TokenRow]) -> Vec<AmrToken> {
        tree.nodes
            .iter()
            .map(|n| AmrToken {
                label: n.label.clone(),
                replica_of: n.replica_of,
                src: if n.replica_of.is_some() { None } else { copy_sources(&n.label, tokens).first().copied() },
            })
            .collect()
    }

    /// Flat indices of every correct outcome at each step, over the segments
    /// `[source L | previous nodes i | vocabulary V]`.
    pub fn targets(&self, tree: &AmrTree, tokens: &[TokenRow]) -> Vec<Vec<usize>> {
        let l = tokens.len();
        let mut out = Vec::with_capacity(tree.nodes.len() + 1);
        for (i, n) in tree.nodes.iter().enumerate() {
            if let Some(f) = n.replica_of {
                out.push(vec![l + f]);
                continue;
            }
            let mut t = copy_sources(&n.label, tokens);
            if let Some(v) = self.labels.get_index_of(&n.label) {
                t.push(l + i + v);
            }
            if t.is_empty() {
                t.push(l + i + UNK_ID);
            }
            out.push(t);
        }
        out.push(vec![l + tree.nodes.len() + EOS_ID]);
        out
    }

    pub fn losses(&self, tape: &mut Tape, inp: &AmrInput, tree: &AmrTree, ctx: &mut Ctx) -> Result<AmrLosses<Var>> {
        if tree.nodes.is_empty() {
            return Err(Error::model("empty AMR tree"));
        }
        let tokens = self.gold_tokens(tree, inp.tokens);
        let targets = self.targets(tree, inp.tokens);
        let run = self.run(tape, inp, &tokens, ctx)?;
        // Summed over steps, like the coverage term.
        let mut terms = Vec::with_capacity(run.steps.len());
        for (p, t) in run.steps.iter().zip(&targets) {
            let sel = tape.select(*p, t)?;
            let s = tape.sum(sel);
            terms.push((-1.0, tape.log(s)));
        }
        let dec = tape.lin_comb(&terms)?;
        let cov_terms: Vec<(f64, Var)> = run.cov.iter().map(|&c| (1.0, c)).collect();
        let cov = tape.lin_comb(&cov_terms)?;
        let nodes = run.nodes.ok_or_else(|| Error::model("no node states"))?;
        let arcs = GoldArcs {
            n: tree.nodes.len(),
            tops: Vec::new(),
            edges: tree
                .edges()
                .into_iter()
                .map(|(h, d, l)| (h, d, self.edges.label_index(&l).unwrap_or(0)))
                .collect(),
        };
        let p = self.edges.project(tape, nodes, ctx)?;
        let logits = self.edges.edge_logits(tape, &p)?;
        let edge = edge_loss(tape, logits, &arcs)?;
        let label = label_loss(tape, &self.edges, &p, &arcs)?;
        Ok(AmrLosses { edge, label, dec, cov })
    }

    pub fn loss(&self, tape: &mut Tape, inp: &AmrInput, tree: &AmrTree, ctx: &mut Ctx) -> Result<Var> {
        let l = self.losses(tape, inp, tree, ctx)?;
        self.config.weights.combine_tape(tape, &l)
    }

    /// Mixture distributions of a teacher-forced run, detached.
    pub fn distributions(&self, tape: &mut Tape, inp: &AmrInput, tokens: &[AmrToken]) -> Result<Vec<Tensor>> {
        let run = self.run(tape, inp, tokens, &mut Ctx::eval())?;
        Ok(run.steps.iter().map(|&p| tape.value(p).clone()).collect())
    }

    /// Beam search (compared against greedy), then maximum spanning tree
    /// edges over the decoded nodes rooted at the first one.
    pub fn predict(&self, tape: &mut Tape, inp: &AmrInput, width: usize) -> Result<AmrPrediction> {
        let mem = self.memory(tape, inp)?;
        let init = self.initial(tape, &mem);
        let max_len = 3 * mem.len + 5;
        let hyp = {
            let mut search = Search {
                head: self,
                tape: &mut *tape,
                mem,
                inp,
            };
            beam_or_greedy(&mut search, init, width, max_len)?
        };
        let tokens = hyp.tokens;
        let mut ctx = Ctx::eval();
        let run = self.run(tape, inp, &tokens, &mut ctx)?;
        let mut edges = Vec::new();
        if let Some(nodes) = run.nodes {
            let scores = self.edges.score(tape, nodes, &mut ctx)?;
            let n = tokens.len();
            let m: Vec<Vec<f64>> = (0..n)
                .map(|h| (0..n).map(|d| scores.edge.get(h, d).max(1e-300).ln()).collect())
                .collect();
            let heads = chu_liu_edmonds(&m, 0)?;
            for (d, h) in heads.iter().enumerate() {
                if let Some(h) = *h {
                    let l = argmax(scores.label_dist(h, d));
                    edges.push((h, d, self.edges.labels[l].clone()));
                }
            }
        }
        Ok(AmrPrediction {
            tokens,
            edges,
            logp: hyp.logp,
        })
    }
}

/// Token positions whose lemma or lowercased surface equals the label.
pub fn copy_sources(label: &str, tokens: &[TokenRow]) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.lemma == label || t.surface.to_lowercase() == label)
        .map(|(j, _)| j)
        .collect()
}

struct Search<'h, 't, 'p, 'i> {
    head: &'h AmrHead,
    tape: &'t mut Tape<'p>,
    mem: Memory,
    inp: &'i AmrInput<'i>,
}

impl StepModel for Search<'_, '_, '_, '_> {
    type State = DecState;
    type Token = AmrToken;

    fn expand(&mut self, state: &DecState, history: &[AmrToken], limit: usize) -> Result<Vec<(Option<AmrToken>, f64, DecState)>> {
        let head = self.head;
        let input = match history.last() {
            None => self.mem.x0,
            Some(t) => head.node_input(self.tape, self.inp, t)?,
        };
        let out = head.step(self.tape, &self.mem, state, input, !history.is_empty(), &mut Ctx::eval())?;
        let p = self.tape.value(out.p).data().to_vec();
        let l = self.mem.len;
        let t = history.len();
        // Fresh labels: copy and generation mass merged per label.
        let mut fresh: BTreeMap<String, (f64, Option<(usize, f64)>, usize)> = BTreeMap::new();
        let mut order = 0;
        let mut bump = |label: &str, mass: f64, src: Option<usize>| {
            let e = fresh.entry(label.to_string()).or_insert_with(|| {
                order += 1;
                (0.0, None, order)
            });
            e.0 += mass;
            if let Some(j) = src {
                if e.1.is_none_or(|(_, m)| mass > m) {
                    e.1 = Some((j, mass));
                }
            }
        };
        for (j, tok) in self.inp.tokens.iter().enumerate() {
            bump(&tok.lemma, p[j], Some(j));
        }
        for (v, label) in head.labels.iter().enumerate().skip(EOS_ID + 1) {
            bump(label, p[l + t + v], None);
        }
        let mut cands: Vec<(f64, usize, Option<AmrToken>)> = fresh
            .into_iter()
            .map(|(label, (mass, src, ord))| {
                (
                    mass,
                    ord,
                    Some(AmrToken {
                        label,
                        replica_of: None,
                        src: src.map(|s| s.0),
                    }),
                )
            })
            .collect();
        let mut replicas: BTreeMap<usize, f64> = BTreeMap::new();
        for (k, h) in history.iter().enumerate() {
            *replicas.entry(h.replica_of.unwrap_or(k)).or_default() += p[l + k];
        }
        let base = cands.len() + 1;
        for (root, mass) in replicas {
            cands.push((
                mass,
                base + root,
                Some(AmrToken {
                    label: history[root].label.clone(),
                    replica_of: Some(root),
                    src: None,
                }),
            ));
        }
        if t > 0 {
            cands.push((p[l + t + EOS_ID], 0, None));
        }
        cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        cands.truncate(limit.max(1));
        Ok(cands
            .into_iter()
            .map(|(mass, _, tok)| (tok, mass.max(1e-300).ln(), out.state.clone()))
            .collect())
    }
}

/// Tables needed to turn decoded nodes into a graph.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AmrResources {
    pub senses: SenseTable,
    pub entities: EntityLexicon,
}

/// Assembles the output graph for a prediction.
pub fn build_amr_graph(id: &str, input: &str, tokens: &[TokenRow], pred: &AmrPrediction, res: &AmrResources) -> MrpGraph {
    let record = res.entities.record_for(tokens);
    postprocess_amr(id, input, &pred.nodes(), &pred.edges, &record, &res.senses)
}
