//! UCCA as a pointing problem: serialization, the pointer decoder that places
//! non-terminals, re-encoding of node states and biaffine edge prediction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unimrp_tensor::{argmax, ParamId, ParamStore, Tape, Tensor, Var};

use crate::biaffine::{edge_loss, label_loss, sigmoid, BiaffineConfig, BiaffineHead, EdgeScores, GoldArcs};
use crate::encoder::EncoderOutput;
use crate::error::{Error, Result};
use crate::graph::{align_ucca_tokens, Anchor, Framework, MrpEdge, MrpGraph, MrpNode, TokenRow, UccaAlignment};
use crate::nn::{positional_encoding, Activation, BiLstm, Ctx, Linear, Lstm, LstmState, Mlp};

/// Reserved label of the virtual edges that join compound terminals.
pub const CT: &str = "CT";

/// What a position in the node-state sequence stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateKind {
    Root,
    Pointer,
    /// 0-based token index.
    Token(usize),
}

/// Node-state order for a pointer sequence: `<ROOT>`, then for every token
/// the non-terminals pointing at it followed by the token itself.
pub fn state_order(pointers: &[usize], n_tokens: usize) -> Vec<StateKind> {
    let mut per_pos = vec![0usize; n_tokens + 1];
    for &p in pointers {
        if p > 0 && p <= n_tokens {
            per_pos[p] += 1;
        }
    }
    let mut out = vec![StateKind::Root];
    for k in 1..=n_tokens {
        out.extend(std::iter::repeat_n(StateKind::Pointer, per_pos[k]));
        out.push(StateKind::Token(k - 1));
    }
    out
}

/// A gold UCCA graph in pointing form. Pointers are sequence positions
/// (token index + 1) and end with `0`; edges index `states`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedUcca {
    pub pointers: Vec<usize>,
    pub states: Vec<StateKind>,
    /// Primary edges including CT edges.
    pub edges: Vec<(usize, usize, String)>,
    pub remote: Vec<(usize, usize, String)>,
}

/// CT edges from the first token of each compound to each later token.
pub fn insert_ct_edges(state_of_token: &[usize], spans: &[(usize, usize)]) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    for &(s, e) in spans {
        for t in s + 1..e {
            out.push((state_of_token[s], state_of_token[t], CT.to_string()));
        }
    }
    out
}

pub fn serialize_ucca(g: &MrpGraph, tokens: &[TokenRow]) -> Result<SerializedUcca> {
    let fail = |message: String| Error::Alignment {
        id: g.id.clone(),
        message,
    };
    let spans = match align_ucca_tokens(g, tokens) {
        UccaAlignment::Aligned(s) => s,
        UccaAlignment::Discrepant(m) => return Err(fail(m)),
    };
    let span_of: BTreeMap<usize, (usize, usize)> = spans.iter().map(|s| (s.node, (s.start, s.end))).collect();
    let primary: Vec<&MrpEdge> = g.edges.iter().filter(|e| !e.is_remote()).collect();
    let root = match g.tops.as_slice() {
        [t] => *t,
        [] => {
            let with_parent: BTreeSet<usize> = primary.iter().map(|e| e.target).collect();
            let roots: Vec<usize> = g.nodes.iter().map(|n| n.id).filter(|i| !with_parent.contains(i)).collect();
            match roots.as_slice() {
                [r] => *r,
                _ => return Err(fail(format!("{} parentless nodes and no top", roots.len()))),
            }
        }
        _ => return Err(fail("more than one top".into())),
    };
    if span_of.contains_key(&root) {
        return Err(fail("top node is a terminal".into()));
    }
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in &primary {
        children.entry(e.source).or_default().push(e.target);
    }
    let mut depth: BTreeMap<usize, usize> = BTreeMap::from([(root, 0)]);
    let mut queue = VecDeque::from([root]);
    while let Some(x) = queue.pop_front() {
        for &c in children.get(&x).into_iter().flatten() {
            if !depth.contains_key(&c) {
                depth.insert(c, depth[&x] + 1);
                queue.push_back(c);
            }
        }
    }
    // First token of each node's yield.
    let mut start: BTreeMap<usize, usize> = BTreeMap::new();
    fn first_token(
        x: usize,
        children: &BTreeMap<usize, Vec<usize>>,
        span_of: &BTreeMap<usize, (usize, usize)>,
        memo: &mut BTreeMap<usize, usize>,
        visiting: &mut BTreeSet<usize>,
    ) -> Option<usize> {
        if let Some(&s) = memo.get(&x) {
            return Some(s);
        }
        if let Some(&(s, _)) = span_of.get(&x) {
            return Some(s);
        }
        if !visiting.insert(x) {
            return None;
        }
        let s = children
            .get(&x)
            .into_iter()
            .flatten()
            .filter_map(|&c| first_token(c, children, span_of, memo, visiting))
            .min();
        visiting.remove(&x);
        if let Some(s) = s {
            memo.insert(x, s);
        }
        s
    }
    let mut nonterminals = Vec::new();
    for n in &g.nodes {
        if n.id == root || span_of.contains_key(&n.id) {
            continue;
        }
        let Some(d) = depth.get(&n.id) else {
            return Err(fail(format!("node {} unreachable from the top", n.id)));
        };
        let Some(s) = first_token(n.id, &children, &span_of, &mut start, &mut BTreeSet::new()) else {
            return Err(fail(format!("non-terminal {} has no terminal descendant", n.id)));
        };
        nonterminals.push((s, *d, n.id));
    }
    nonterminals.sort();
    let mut pointers: Vec<usize> = nonterminals.iter().map(|&(s, _, _)| s + 1).collect();
    let states = state_order(&pointers, tokens.len());
    pointers.push(0);
    let mut state_of_node: BTreeMap<usize, usize> = BTreeMap::from([(root, 0)]);
    let mut state_of_token = vec![0; tokens.len()];
    let mut nt = nonterminals.iter();
    for (k, s) in states.iter().enumerate() {
        match s {
            StateKind::Root => {}
            StateKind::Pointer => {
                state_of_node.insert(nt.next().expect("one per pointer").2, k);
            }
            StateKind::Token(t) => state_of_token[*t] = k,
        }
    }
    for (&node, &(s, _)) in &span_of {
        state_of_node.insert(node, state_of_token[s]);
    }
    let map_edge = |e: &MrpEdge| (state_of_node[&e.source], state_of_node[&e.target], e.label.clone().unwrap_or_default());
    let mut edges: Vec<(usize, usize, String)> = primary.iter().map(|e| map_edge(e)).collect();
    let compound: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
    edges.extend(insert_ct_edges(&state_of_token, &compound));
    let remote = g.edges.iter().filter(|e| e.is_remote()).map(map_edge).collect();
    Ok(SerializedUcca {
        pointers,
        states,
        edges,
        remote,
    })
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

/// Rebuilds a UCCA graph from pointers and edges over states. CT-connected
/// tokens merge into one terminal anchored over their union; states without
/// any edge are dropped; the first edge between a pair wins; remote edges
/// never replace primary ones.
pub fn deserialize_ucca(
    id: &str,
    input: &str,
    tokens: &[TokenRow],
    pointers: &[usize],
    edges: &[(usize, usize, String)],
    remote: &[(usize, usize, String)],
) -> MrpGraph {
    let body: Vec<usize> = pointers.iter().copied().filter(|&p| p != 0).collect();
    let states = state_order(&body, tokens.len());
    let m = states.len();
    let mut parent: Vec<usize> = (0..m).collect();
    let is_token = |s: usize| matches!(states.get(s), Some(StateKind::Token(_)));
    for (i, j, l) in edges {
        if l == CT && *i < m && *j < m && is_token(*i) && is_token(*j) {
            let (a, b) = (find(&mut parent, *i), find(&mut parent, *j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let reps: Vec<usize> = (0..m).map(|s| find(&mut parent, s)).collect();
    let mut used = vec![false; m];
    used[0] = true;
    for (i, j, l) in edges.iter().chain(remote) {
        if l != CT && *i < m && *j < m && reps[*i] != reps[*j] {
            used[reps[*i]] = true;
            used[reps[*j]] = true;
        }
    }
    let mut g = MrpGraph::new(id, Framework::Ucca, input);
    let mut node_of: BTreeMap<usize, usize> = BTreeMap::new();
    for s in 0..m {
        if reps[s] != s || !used[s] {
            continue;
        }
        let nid = g.nodes.len();
        let mut n = MrpNode::new(nid);
        if let StateKind::Token(_) = states[s] {
            let members: Vec<usize> = (0..m)
                .filter(|&x| reps[x] == s)
                .filter_map(|x| match states[x] {
                    StateKind::Token(t) => Some(t),
                    _ => None,
                })
                .collect();
            let from = tokens[*members.iter().min().expect("nonempty")].anchor.from;
            let to = tokens[*members.iter().max().expect("nonempty")].anchor.to;
            n.anchors.push(Anchor::new(from, to));
        }
        g.nodes.push(n);
        node_of.insert(s, nid);
    }
    g.tops = vec![0];
    let mut seen = BTreeSet::new();
    for (i, j, l) in edges {
        if l == CT || *i >= m || *j >= m {
            continue;
        }
        let (a, b) = (node_of[&reps[*i]], node_of[&reps[*j]]);
        if a != b && seen.insert((a, b)) {
            g.edges.push(MrpEdge::new(a, b, l.clone()));
        }
    }
    for (i, j, l) in remote {
        if *i >= m || *j >= m {
            continue;
        }
        let (a, b) = (node_of[&reps[*i]], node_of[&reps[*j]]);
        if a != b && seen.insert((a, b)) {
            let mut e = MrpEdge::new(a, b, l.clone());
            e.attributes.push(("remote".into(), "true".into()));
            g.edges.push(e);
        }
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UccaLossWeights {
    pub edge: f64,
    pub label: f64,
    pub remote: f64,
    pub dec: f64,
}

impl Default for UccaLossWeights {
    fn default() -> Self {
        UccaLossWeights {
            edge: 0.3,
            label: 0.3,
            remote: 0.2,
            dec: 0.2,
        }
    }
}

impl UccaLossWeights {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("edge", self.edge), ("label", self.label), ("remote", self.remote), ("dec", self.dec)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("UCCA λ_{n} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn combine(&self, l: &UccaLosses<f64>) -> f64 {
        self.edge * l.edge + self.label * l.label + self.remote * l.remote + self.dec * l.dec
    }

    pub fn combine_tape(&self, tape: &mut Tape, l: &UccaLosses<Var>) -> Result<Var> {
        Ok(tape.lin_comb(&[(self.edge, l.edge), (self.label, l.label), (self.remote, l.remote), (self.dec, l.dec)])?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UccaLosses<T> {
    pub edge: T,
    pub label: T,
    pub remote: T,
    pub dec: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UccaConfig {
    pub biaffine: BiaffineConfig,
    pub attention_dim: usize,
    pub pointer_seed_dim: usize,
    pub pointer_hidden: usize,
    pub position_dim: usize,
    pub reencoder_hidden: usize,
    pub reencoder_layers: usize,
    pub decoder_dropout: f64,
    /// Encoder layers whose final states seed the decoder; all when unset.
    pub top_k: Option<usize>,
    pub weights: UccaLossWeights,
}

impl Default for UccaConfig {
    fn default() -> Self {
        UccaConfig {
            biaffine: BiaffineConfig {
                edge_hidden: 500,
                label_hidden: 400,
                ..BiaffineConfig::default()
            },
            attention_dim: 256,
            pointer_seed_dim: 100,
            pointer_hidden: 256,
            position_dim: 32,
            reencoder_hidden: 256,
            reencoder_layers: 1,
            decoder_dropout: 0.5,
            top_k: None,
            weights: UccaLossWeights::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UccaHead {
    pub config: UccaConfig,
    pub top_k: usize,
    pub decoder: Lstm,
    pub attn_dec: Linear,
    pub attn_enc: Linear,
    pub attn_v: ParamId,
    pub seed: ParamId,
    pub bullet: Mlp,
    pub reencoder: BiLstm,
    /// Labels include `CT`.
    pub edges: BiaffineHead,
    pub remote: BiaffineHead,
}

/// Pointer sequence, truncation flag and scores of one sentence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UccaPrediction {
    pub pointers: Vec<usize>,
    pub truncated: bool,
    pub scores: EdgeScores,
    /// Remote edge probabilities over states.
    pub remote: Tensor,
}

impl UccaHead {
    /// `layers` and `hidden` describe the shared encoder's biLSTM.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cfg: &UccaConfig,
        encoder_layers: usize,
        encoder_hidden: usize,
        labels: &[String],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let width = 2 * encoder_hidden;
        let top_k = cfg.top_k.unwrap_or(encoder_layers).clamp(1, encoder_layers);
        let dec_hidden = 2 * top_k * encoder_hidden;
        let mut labels: Vec<String> = labels.iter().filter(|l| *l != CT).cloned().collect();
        labels.push(CT.to_string());
        let re_in = width + cfg.position_dim;
        let re_out = 2 * cfg.reencoder_hidden;
        UccaHead {
            config: cfg.clone(),
            top_k,
            decoder: Lstm::new(store, &format!("{name}.decoder"), width, dec_hidden, rng),
            attn_dec: Linear::new(store, &format!("{name}.attn_dec"), dec_hidden, cfg.attention_dim, false, rng),
            attn_enc: Linear::new(store, &format!("{name}.attn_enc"), width, cfg.attention_dim, false, rng),
            attn_v: store.add(format!("{name}.attn_v"), Tensor::glorot(cfg.attention_dim, 1, rng)),
            seed: store.add(format!("{name}.seed"), Tensor::normal(1, cfg.pointer_seed_dim, 1.0, rng)),
            bullet: Mlp::new(store, &format!("{name}.bullet"), cfg.pointer_seed_dim, cfg.pointer_hidden, width, Activation::Elu, 0.0, rng),
            reencoder: BiLstm::new(store, &format!("{name}.reencoder"), re_in, cfg.reencoder_hidden, cfg.reencoder_layers, 0.0, rng),
            edges: BiaffineHead::new(store, &format!("{name}.edges"), re_out, &cfg.biaffine, labels, rng),
            remote: BiaffineHead::new(store, &format!("{name}.remote"), re_out, &cfg.biaffine, vec!["remote".into()], rng),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.edges.labels
    }

    /// Decoder state from the final encoder states of the top K layers.
    pub fn init_state(&self, tape: &mut Tape, enc: &EncoderOutput) -> Result<LstmState> {
        let n = enc.finals.len();
        let layers = &enc.finals[n - self.top_k..];
        let mut hs: Vec<Var> = layers.iter().map(|f| f[0].h).collect();
        hs.extend(layers.iter().map(|f| f[1].h));
        let mut cs: Vec<Var> = layers.iter().map(|f| f[0].c).collect();
        cs.extend(layers.iter().map(|f| f[1].c));
        Ok(LstmState {
            h: tape.concat_cols(&hs)?,
            c: tape.concat_cols(&cs)?,
        })
    }

    /// `vᵀ tanh(W[h_dec; h_j])` for every position `j`, as a 1×n row.
    fn attention(&self, tape: &mut Tape, h: Var, enc_proj: Var) -> Result<Var> {
        let hd = self.attn_dec.forward(tape, h)?;
        let s = tape.add(enc_proj, hd)?;
        let s = tape.tanh(s);
        let v = tape.param(self.attn_v);
        let a = tape.matmul(s, v)?;
        Ok(tape.transpose(a))
    }

    /// Attention logits (T×n) with gold pointers fed back as inputs.
    pub fn teacher_forced(&self, tape: &mut Tape, enc: &EncoderOutput, gold: &[usize], ctx: &mut Ctx) -> Result<Var> {
        let states = enc.top();
        let enc_proj = self.attn_enc.forward(tape, states)?;
        let mut inputs = vec![0];
        inputs.extend_from_slice(&gold[..gold.len().saturating_sub(1)]);
        let x = tape.gather_rows(states, &inputs)?;
        let x = ctx.dropout(tape, x, self.config.decoder_dropout)?;
        let xw = self.decoder.project(tape, x)?;
        let mut state = self.init_state(tape, enc)?;
        let mut rows = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let row = tape.slice_rows(xw, t, 1)?;
            state = self.decoder.step_projected(tape, row, state)?;
            rows.push(self.attention(tape, state.h, enc_proj)?);
        }
        Ok(tape.concat_rows(&rows)?)
    }

    /// Mean cross-entropy of the gold pointers.
    pub fn pointer_loss(&self, tape: &mut Tape, enc: &EncoderOutput, gold: &[usize], ctx: &mut Ctx) -> Result<Var> {
        let logits = self.teacher_forced(tape, enc, gold, ctx)?;
        let l = tape.cross_entropy(logits, gold, None)?;
        Ok(tape.scale(l, 1.0 / gold.len() as f64))
    }

    /// Greedy pointing until `<ROOT>` or `2·L_in` steps. On truncation the
    /// terminator is appended and the flag set.
    pub fn decode_pointers(&self, tape: &mut Tape, enc: &EncoderOutput) -> Result<(Vec<usize>, bool)> {
        let states = enc.top();
        let n_tokens = tape.shape(states)[0] - 1;
        let enc_proj = self.attn_enc.forward(tape, states)?;
        let mut state = self.init_state(tape, enc)?;
        let mut input = 0;
        let mut out = Vec::new();
        for _ in 0..(2 * n_tokens).max(1) {
            let x = tape.row(states, input)?;
            state = self.decoder.step(tape, x, state)?;
            let a = self.attention(tape, state.h, enc_proj)?;
            let p = argmax(tape.value(a).data());
            out.push(p);
            if p == 0 {
                return Ok((out, false));
            }
            input = p;
        }
        log::warn!("pointer decoding hit its cap of {} steps", out.len());
        out.push(0);
        Ok((out, true))
    }

    /// States for `<ROOT>`, inserted non-terminals and tokens, with position
    /// encodings, passed through the re-encoder.
    pub fn node_states(&self, tape: &mut Tape, enc: &EncoderOutput, pointers: &[usize], ctx: &mut Ctx) -> Result<Var> {
        let states = enc.top();
        let n = tape.shape(states)[0];
        let seed = tape.frozen_param(self.seed);
        let bullet = self.bullet.forward(tape, seed, ctx)?;
        let table = tape.concat_rows(&[states, bullet])?;
        let body: Vec<usize> = pointers.iter().copied().filter(|&p| p != 0).collect();
        let order: Vec<usize> = state_order(&body, n - 1)
            .into_iter()
            .map(|s| match s {
                StateKind::Root => 0,
                StateKind::Pointer => n,
                StateKind::Token(t) => t + 1,
            })
            .collect();
        let seq = tape.gather_rows(table, &order)?;
        let pe = tape.constant(positional_encoding(order.len(), self.config.position_dim));
        let seq = tape.concat_cols(&[seq, pe])?;
        Ok(self.reencoder.forward(tape, seq, ctx)?.top())
    }

    /// The four component losses against a serialized gold graph.
    pub fn losses(&self, tape: &mut Tape, enc: &EncoderOutput, gold: &SerializedUcca, ctx: &mut Ctx) -> Result<UccaLosses<Var>> {
        let dec = self.pointer_loss(tape, enc, &gold.pointers, ctx)?;
        let states = self.node_states(tape, enc, &gold.pointers, ctx)?;
        let m = gold.states.len();
        let index = |l: &str| self.edges.label_index(l).unwrap_or(0);
        let arcs = GoldArcs {
            n: m,
            tops: Vec::new(),
            edges: gold.edges.iter().map(|(i, j, l)| (*i, *j, index(l))).collect(),
        };
        let p = self.edges.project(tape, states, ctx)?;
        let logits = self.edges.edge_logits(tape, &p)?;
        let edge = edge_loss(tape, logits, &arcs)?;
        let label = label_loss(tape, &self.edges, &p, &arcs)?;
        let remote_arcs = GoldArcs {
            n: m,
            tops: Vec::new(),
            edges: gold.remote.iter().map(|(i, j, _)| (*i, *j, 0)).collect(),
        };
        let rp = self.remote.project(tape, states, ctx)?;
        let rl = self.remote.edge_logits(tape, &rp)?;
        let remote = edge_loss(tape, rl, &remote_arcs)?;
        Ok(UccaLosses { edge, label, remote, dec })
    }

    pub fn loss(&self, tape: &mut Tape, enc: &EncoderOutput, gold: &SerializedUcca, ctx: &mut Ctx) -> Result<Var> {
        let l = self.losses(tape, enc, gold, ctx)?;
        self.config.weights.combine_tape(tape, &l)
    }

    /// Scores for a given pointer sequence.
    pub fn score(&self, tape: &mut Tape, enc: &EncoderOutput, pointers: &[usize]) -> Result<(EdgeScores, Tensor)> {
        let mut ctx = Ctx::eval();
        let states = self.node_states(tape, enc, pointers, &mut ctx)?;
        let scores = self.edges.score(tape, states, &mut ctx)?;
        let rp = self.remote.project(tape, states, &mut ctx)?;
        let rl = self.remote.edge_logits(tape, &rp)?;
        Ok((scores, tape.value(rl).map(sigmoid)))
    }

    pub fn predict(&self, tape: &mut Tape, enc: &EncoderOutput) -> Result<UccaPrediction> {
        let (pointers, truncated) = self.decode_pointers(tape, enc)?;
        let (scores, remote) = self.score(tape, enc, &pointers)?;
        Ok(UccaPrediction {
            pointers,
            truncated,
            scores,
            remote,
        })
    }
}

/// Thresholds primary and remote probabilities at 0.5 and rebuilds the graph.
pub fn decode_ucca(id: &str, input: &str, tokens: &[TokenRow], labels: &[String], pred: &UccaPrediction) -> MrpGraph {
    let m = pred.scores.n();
    let mut edges = Vec::new();
    let mut remote = Vec::new();
    for i in 0..m {
        for j in 1..m {
            if i == j {
                continue;
            }
            let label = || labels[argmax(pred.scores.label_dist(i, j))].clone();
            if pred.scores.edge.get(i, j) > 0.5 {
                edges.push((i, j, label()));
            } else if pred.remote.get(i, j) > 0.5 {
                let l = label();
                if l != CT {
                    remote.push((i, j, l));
                }
            }
        }
    }
    deserialize_ucca(id, input, tokens, &pred.pointers, &edges, &remote)
}

/// The most frequent pointer sequence (lexicographically smallest on ties)
/// with the scores of the members that produced it averaged.
pub fn voting_ensemble(members: &[UccaPrediction]) -> Result<UccaPrediction> {
    if members.is_empty() {
        return Err(Error::model("voting over zero members"));
    }
    let mut counts: BTreeMap<&[usize], usize> = BTreeMap::new();
    for m in members {
        *counts.entry(m.pointers.as_slice()).or_default() += 1;
    }
    let best = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(k, _)| k.to_vec())
        .expect("nonempty");
    let chosen: Vec<&UccaPrediction> = members.iter().filter(|m| m.pointers == best).collect();
    let scores: Vec<&EdgeScores> = chosen.iter().map(|m| &m.scores).collect();
    let mut remote = Tensor::zeros(chosen[0].remote.rows(), chosen[0].remote.cols());
    for m in &chosen {
        remote.add_assign(&m.remote);
    }
    if chosen.len() > 1 {
        remote.scale_assign(1.0 / chosen.len() as f64);
    }
    Ok(UccaPrediction {
        pointers: best,
        truncated: chosen.iter().any(|m| m.truncated),
        scores: EdgeScores::average(&scores),
        remote,
    })
}

/// Edge labels (without `CT`) seen in serialized training graphs.
pub fn label_inventory<'a>(graphs: impl IntoIterator<Item = &'a SerializedUcca>) -> Vec<String> {
    let set: BTreeSet<String> = graphs
        .into_iter()
        .flat_map(|s| s.edges.iter().chain(&s.remote).map(|e| e.2.clone()))
        .filter(|l| l != CT)
        .collect();
    set.into_iter().collect()
}
