//! Biaffine edge and label scoring over a sequence of node states, and the
//! threshold decoder for token-aligned graphs.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unimrp_tensor::{argmax, ParamId, ParamStore, Tape, Tensor, Var};

use crate::error::Result;
use crate::nn::{Activation, Ctx, Mlp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiaffineConfig {
    pub edge_hidden: usize,
    pub edge_dim: usize,
    pub label_hidden: usize,
    pub label_dim: usize,
    pub input_dropout: f64,
    pub edge_dropout: f64,
    pub label_dropout: f64,
    pub activation: Activation,
}

impl Default for BiaffineConfig {
    fn default() -> Self {
        BiaffineConfig {
            edge_hidden: 600,
            edge_dim: 600,
            label_hidden: 600,
            label_dim: 600,
            input_dropout: 0.2,
            edge_dropout: 0.25,
            label_dropout: 0.33,
            activation: Activation::Elu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiaffineHead {
    pub edge_from: Mlp,
    pub edge_to: Mlp,
    pub label_from: Mlp,
    pub label_to: Mlp,
    pub u_edge: ParamId,
    pub w_edge: ParamId,
    pub b_edge: ParamId,
    pub u_label: ParamId,
    pub w_label: ParamId,
    pub labels: Vec<String>,
    pub input_dropout: f64,
}

/// MLP projections of a state sequence, shared by edge and label scoring.
#[derive(Clone, Copy, Debug)]
pub struct Projected {
    pub edge_from: Var,
    pub edge_to: Var,
    pub label_from: Var,
    pub label_to: Var,
}

impl BiaffineHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        cfg: &BiaffineConfig,
        labels: Vec<String>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mlp = |store: &mut ParamStore, n: &str, hidden, out, drop, rng: &mut ChaCha8Rng| {
            Mlp::new(store, &format!("{name}.{n}"), input, hidden, out, cfg.activation, drop, rng)
        };
        let edge_from = mlp(store, "edge_from", cfg.edge_hidden, cfg.edge_dim, cfg.edge_dropout, rng);
        let edge_to = mlp(store, "edge_to", cfg.edge_hidden, cfg.edge_dim, cfg.edge_dropout, rng);
        let label_from = mlp(store, "label_from", cfg.label_hidden, cfg.label_dim, cfg.label_dropout, rng);
        let label_to = mlp(store, "label_to", cfg.label_hidden, cfg.label_dim, cfg.label_dropout, rng);
        Self::with_mlps(store, name, cfg, labels, [edge_from, edge_to, label_from, label_to])
    }

    /// A head with its own bilinear parameters but the MLPs of `other`.
    pub fn sharing_mlps(store: &mut ParamStore, name: &str, cfg: &BiaffineConfig, labels: Vec<String>, other: &BiaffineHead) -> Self {
        let mlps = [
            other.edge_from.clone(),
            other.edge_to.clone(),
            other.label_from.clone(),
            other.label_to.clone(),
        ];
        Self::with_mlps(store, name, cfg, labels, mlps)
    }

    fn with_mlps(store: &mut ParamStore, name: &str, cfg: &BiaffineConfig, labels: Vec<String>, mlps: [Mlp; 4]) -> Self {
        let labels = if labels.is_empty() { vec!["_".to_string()] } else { labels };
        let [edge_from, edge_to, label_from, label_to] = mlps;
        let de = edge_from.output();
        let dl = label_from.output();
        let c = labels.len();
        BiaffineHead {
            u_edge: store.add(format!("{name}.u_edge"), Tensor::zeros(de, de)),
            w_edge: store.add(format!("{name}.w_edge"), Tensor::zeros(1, 2 * de)),
            b_edge: store.add(format!("{name}.b_edge"), Tensor::zeros(1, 1)),
            u_label: store.add(format!("{name}.u_label"), Tensor::zeros(dl, c * dl)),
            w_label: store.add(format!("{name}.w_label"), Tensor::zeros(c, dl)),
            edge_from,
            edge_to,
            label_from,
            label_to,
            labels,
            input_dropout: cfg.input_dropout,
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn project(&self, tape: &mut Tape, states: Var, ctx: &mut Ctx) -> Result<Projected> {
        let x = ctx.dropout(tape, states, self.input_dropout)?;
        Ok(Projected {
            edge_from: self.edge_from.forward(tape, x, ctx)?,
            edge_to: self.edge_to.forward(tape, x, ctx)?,
            label_from: self.label_from.forward(tape, x, ctx)?,
            label_to: self.label_to.forward(tape, x, ctx)?,
        })
    }

    /// `n × n` edge logits: `xᵢᵀ U yⱼ + W[xᵢ; yⱼ] + b` for every ordered pair.
    pub fn edge_logits(&self, tape: &mut Tape, p: &Projected) -> Result<Var> {
        let d = tape.shape(p.edge_from)[1];
        let u = tape.param(self.u_edge);
        let w = tape.param(self.w_edge);
        let b = tape.param(self.b_edge);
        let xu = tape.matmul(p.edge_from, u)?;
        let bil = tape.matmul_t(xu, p.edge_to)?;
        let w_from = tape.slice_cols(w, 0, d)?;
        let w_to = tape.slice_cols(w, d, d)?;
        let lin_from = tape.matmul_t(p.edge_from, w_from)?;
        let lin_to = tape.matmul_t(w_to, p.edge_to)?;
        let s = tape.add(bil, lin_from)?;
        let s = tape.add(s, lin_to)?;
        Ok(tape.add(s, b)?)
    }

    /// Label logits `xᵀU_c y + W_c y` for the given `(from, to)` pairs, one
    /// row per pair.
    pub fn label_logits(&self, tape: &mut Tape, p: &Projected, pairs: &[(usize, usize)]) -> Result<Var> {
        let from: Vec<usize> = pairs.iter().map(|x| x.0).collect();
        let to: Vec<usize> = pairs.iter().map(|x| x.1).collect();
        let x = tape.gather_rows(p.label_from, &from)?;
        let y = tape.gather_rows(p.label_to, &to)?;
        let d = tape.shape(y)[1];
        let u = tape.param(self.u_label);
        let w = tape.param(self.w_label);
        let xu = tape.matmul(x, u)?;
        let mut cols = Vec::with_capacity(self.labels.len());
        for c in 0..self.labels.len() {
            let xu_c = tape.slice_cols(xu, c * d, d)?;
            let prod = tape.mul(xu_c, y)?;
            cols.push(tape.sum_rows(prod));
        }
        let bil = tape.concat_cols(&cols)?;
        let lin = tape.matmul_t(y, w)?;
        Ok(tape.add(bil, lin)?)
    }

    /// Probabilities for every ordered pair, detached from the tape.
    pub fn score(&self, tape: &mut Tape, states: Var, ctx: &mut Ctx) -> Result<EdgeScores> {
        let p = self.project(tape, states, ctx)?;
        let n = tape.shape(states)[0];
        let edge = self.edge_logits(tape, &p)?;
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let labels = self.label_logits(tape, &p, &pairs)?;
        let labels = tape.softmax(labels);
        Ok(EdgeScores {
            edge: tape.value(edge).map(sigmoid),
            labels: tape.value(labels).clone(),
        })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Edge probabilities `n × n` (row 0 is `<ROOT>`) and label distributions
/// `(n·n) × C`, row `i·n + j` for pair `(i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores {
    pub edge: Tensor,
    pub labels: Tensor,
}

impl EdgeScores {
    pub fn n(&self) -> usize {
        self.edge.rows()
    }

    pub fn label_dist(&self, i: usize, j: usize) -> &[f64] {
        self.labels.row_slice(i * self.n() + j)
    }

    /// Elementwise mean of several score sets over the same positions.
    pub fn average(members: &[&EdgeScores]) -> EdgeScores {
        let k = members.len() as f64;
        let mut edge = Tensor::zeros(members[0].edge.rows(), members[0].edge.cols());
        let mut labels = Tensor::zeros(members[0].labels.rows(), members[0].labels.cols());
        for m in members {
            edge.add_assign(&m.edge);
            labels.add_assign(&m.labels);
        }
        if members.len() > 1 {
            edge.scale_assign(1.0 / k);
            labels.scale_assign(1.0 / k);
        }
        EdgeScores { edge, labels }
    }
}

/// Output of the threshold decoder, in sequence positions (0 = `<ROOT>`).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Flavor0Decode {
    /// `(from, to, label index)`.
    pub edges: Vec<(usize, usize, usize)>,
    pub tops: Vec<usize>,
    /// Positions kept as nodes, ascending.
    pub nodes: Vec<usize>,
}

/// Keeps edge `(i, j)` for `i, j > 0`, `i ≠ j` when its probability exceeds
/// 0.5, with the most probable label (lowest index on ties). Position `j` is a
/// top when `(0, j)` exceeds 0.5. Nodes with no edge that are not tops are
/// dropped.
pub fn decode_flavor0(scores: &EdgeScores) -> Flavor0Decode {
    let n = scores.n();
    let mut out = Flavor0Decode::default();
    let mut used = vec![false; n];
    for j in 1..n {
        if scores.edge.get(0, j) > 0.5 {
            out.tops.push(j);
            used[j] = true;
        }
    }
    for i in 1..n {
        for j in 1..n {
            if i != j && scores.edge.get(i, j) > 0.5 {
                out.edges.push((i, j, argmax(scores.label_dist(i, j))));
                used[i] = true;
                used[j] = true;
            }
        }
    }
    out.nodes = (1..n).filter(|&j| used[j]).collect();
    out
}

/// Gold arcs over sequence positions; tops are arcs from position 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoldArcs {
    pub n: usize,
    pub tops: Vec<usize>,
    /// `(from, to, label index)`.
    pub edges: Vec<(usize, usize, usize)>,
}

impl GoldArcs {
    pub fn edge_targets(&self) -> Tensor {
        let mut t = Tensor::zeros(self.n, self.n);
        for &j in &self.tops {
            t.set(0, j, 1.0);
        }
        for &(i, j, _) in &self.edges {
            t.set(i, j, 1.0);
        }
        t
    }
}

/// Mean binary cross-entropy over every cell, `<ROOT>` row included.
pub fn edge_loss(tape: &mut Tape, logits: Var, gold: &GoldArcs) -> Result<Var> {
    let cells = (gold.n * gold.n) as f64;
    let l = tape.bce_with_logits(logits, gold.edge_targets(), None)?;
    Ok(tape.scale(l, 1.0 / cells))
}

/// Mean cross-entropy of the gold labels over gold edges (tops excluded).
/// Zero when the graph has no edges.
pub fn label_loss(tape: &mut Tape, head: &BiaffineHead, p: &Projected, gold: &GoldArcs) -> Result<Var> {
    if gold.edges.is_empty() {
        return Ok(tape.scalar(0.0));
    }
    let pairs: Vec<(usize, usize)> = gold.edges.iter().map(|e| (e.0, e.1)).collect();
    let targets: Vec<usize> = gold.edges.iter().map(|e| e.2).collect();
    let logits = head.label_logits(tape, p, &pairs)?;
    let l = tape.cross_entropy(logits, &targets, None)?;
    Ok(tape.scale(l, 1.0 / pairs.len() as f64))
}
