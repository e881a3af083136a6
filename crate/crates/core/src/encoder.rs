//! Token featurization and the shared biLSTM encoder.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use unimrp_tensor::{ParamId, ParamStore, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::graph::{Sentence, TokenRow};
use crate::nn::{Activation, BiLstm, Ctx, Linear, LstmState};

pub const UNK: usize = 0;
pub const NUM: usize = 1;
pub const ROOT: usize = 2;
pub const UNK_TOKEN: &str = "<UNK>";
pub const NUM_TOKEN: &str = "<NUM>";
pub const ROOT_TOKEN: &str = "<ROOT>";
pub const MIN_FREQ: usize = 4;

/// Whether a string reads as a number the way a float parser would accept it.
pub fn is_numeric(s: &str) -> bool {
    let t = s.trim();
    !t.is_empty() && t.parse::<f64>().is_ok()
}

/// Symbol inventory with reserved `<UNK>`, `<NUM>` and `<ROOT>` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "SymbolsRepr", into = "SymbolsRepr")]
pub struct Symbols {
    items: Vec<String>,
    counts: Vec<usize>,
    index: HashMap<String, usize>,
    numeric: bool,
}

#[derive(Serialize, Deserialize)]
struct SymbolsRepr {
    items: Vec<String>,
    counts: Vec<usize>,
    numeric: bool,
}

impl From<SymbolsRepr> for Symbols {
    fn from(r: SymbolsRepr) -> Self {
        let index = r.items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Symbols {
            items: r.items,
            counts: r.counts,
            index,
            numeric: r.numeric,
        }
    }
}

impl From<Symbols> for SymbolsRepr {
    fn from(s: Symbols) -> Self {
        SymbolsRepr {
            items: s.items,
            counts: s.counts,
            numeric: s.numeric,
        }
    }
}

impl Symbols {
    /// Keeps symbols seen at least `min_freq` times, in first-seen order.
    /// With `numeric`, number-like symbols collapse into `<NUM>`.
    pub fn build<'a>(symbols: impl IntoIterator<Item = &'a str>, min_freq: usize, numeric: bool) -> Self {
        let mut order: Vec<String> = Vec::new();
        let mut freq: HashMap<String, usize> = HashMap::new();
        for s in symbols {
            if numeric && is_numeric(s) {
                continue;
            }
            let e = freq.entry(s.to_string()).or_insert_with(|| {
                order.push(s.to_string());
                0
            });
            *e += 1;
        }
        let mut out = Symbols {
            items: vec![UNK_TOKEN.into(), NUM_TOKEN.into(), ROOT_TOKEN.into()],
            counts: vec![0; 3],
            index: HashMap::new(),
            numeric,
        };
        for s in order {
            let c = freq[&s];
            if c >= min_freq && !out.items.contains(&s) {
                out.items.push(s);
                out.counts.push(c);
            }
        }
        out.index = out.items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        out
    }

    pub fn index(&self, s: &str) -> usize {
        if self.numeric && is_numeric(s) {
            return NUM;
        }
        self.index.get(s).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, s: &str) -> bool {
        self.index.contains_key(s)
    }

    pub fn get(&self, i: usize) -> &str {
        &self.items[i]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, i: usize) -> usize {
        self.counts[i]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub surface: Symbols,
    pub lemma: Symbols,
    pub upos: Symbols,
    pub xpos: Symbols,
    pub ne: Symbols,
}

impl Vocabulary {
    /// Surfaces (lower-cased) and lemmas need [`MIN_FREQ`] occurrences; tag
    /// inventories are kept whole. `extra_lemmas` adds symbols such as AMR
    /// node labels, which the decoder re-embeds through the lemma table.
    pub fn build<'a>(
        tokens: impl IntoIterator<Item = &'a TokenRow> + Clone,
        extra_lemmas: &[String],
        min_freq: usize,
    ) -> Result<Self> {
        if tokens.clone().into_iter().next().is_none() {
            return Err(Error::config("cannot build a vocabulary from an empty corpus"));
        }
        let lowered: Vec<String> = tokens.clone().into_iter().map(|t| t.surface.to_lowercase()).collect();
        let lemmas = tokens
            .clone()
            .into_iter()
            .map(|t| t.lemma.as_str())
            .chain(extra_lemmas.iter().map(String::as_str));
        Ok(Vocabulary {
            surface: Symbols::build(lowered.iter().map(String::as_str), min_freq, true),
            lemma: Symbols::build(lemmas, min_freq, true),
            upos: Symbols::build(tokens.clone().into_iter().map(|t| t.upos.as_str()), 1, false),
            xpos: Symbols::build(tokens.clone().into_iter().map(|t| t.xpos.as_str()), 1, false),
            ne: Symbols::build(tokens.into_iter().map(|t| t.ne.as_str()), 1, false),
        })
    }

    pub fn from_sentences(sentences: &[Sentence], extra_lemmas: &[String], min_freq: usize) -> Result<Self> {
        Self::build(sentences.iter().flat_map(|s| s.tokens.iter()), extra_lemmas, min_freq)
    }
}

/// Fixed word vectors looked up by surface.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticEmbeddings {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    unk: Vec<f64>,
}

impl StaticEmbeddings {
    fn unk_row(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid std");
        (0..dim).map(|_| normal.sample(&mut rng)).collect()
    }

    /// Reads `<token> <v1> ... <vd>` lines. Unknown words share a random
    /// vector with standard deviation `1/sqrt(d)`.
    pub fn read<R: BufRead>(reader: R, seed: u64) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("bad vector value: {e}"),
                })?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("vector of width {}, expected {d}", v.len()),
                    })
                }
                _ => {}
            }
            vectors.insert(word.to_string(), v);
        }
        let dim = dim.ok_or_else(|| Error::Format("static embedding file is empty".into()))?;
        Ok(StaticEmbeddings {
            dim,
            vectors,
            unk: Self::unk_row(dim, seed),
        })
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut words: Vec<_> = self.vectors.keys().collect();
        words.sort();
        for w in words {
            write!(out, "{w}")?;
            for x in &self.vectors[w] {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Deterministic vectors for a word list, derived from a hash of each word.
    pub fn synthetic<'a>(words: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> Self {
        let vectors = words
            .into_iter()
            .map(|w| (w.to_string(), hashed_vector(w, seed, dim)))
            .collect();
        StaticEmbeddings {
            dim,
            vectors,
            unk: Self::unk_row(dim, seed),
        }
    }

    pub fn lookup(&self, word: &str) -> &[f64] {
        self.vectors
            .get(word)
            .or_else(|| self.vectors.get(&word.to_lowercase()))
            .unwrap_or(&self.unk)
    }

    /// Rows for `<ROOT>` followed by each token.
    pub fn rows(&self, tokens: &[TokenRow]) -> Tensor {
        let mut data = self.lookup(ROOT_TOKEN).to_vec();
        for t in tokens {
            data.extend_from_slice(self.lookup(&t.surface));
        }
        Tensor::from_vec(tokens.len() + 1, self.dim, data).expect("rows are dim wide")
    }
}

/// FNV-1a, used to derive stable pseudo-random vectors from strings.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn hashed_vector(key: &str, seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(key.as_bytes()) ^ seed);
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Precomputed multi-layer contextual vectors per sentence. Stored matrices
/// include a leading all-zero `<ROOT>` row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContextualEmbeddings {
    pub layers: usize,
    pub width: usize,
    sentences: HashMap<String, Vec<Tensor>>,
}

#[derive(Serialize, Deserialize)]
struct ContextualRecord {
    id: String,
    /// `layers × rows × width`.
    layers: Vec<Vec<Vec<f64>>>,
    /// When present, rows are subwords and this maps each to its token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_index: Option<Vec<usize>>,
}

impl ContextualEmbeddings {
    /// Reads JSON lines `{"id", "layers", "token_index"?}`. Subword rows are
    /// averaged into their tokens.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut out = ContextualEmbeddings::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ContextualRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let id = rec.id.clone();
            let mats = Self::record_matrices(rec).map_err(|message| Error::Alignment {
                id: id.clone(),
                message,
            })?;
            if out.sentences.is_empty() {
                out.layers = mats.len();
                out.width = mats[0].cols();
            } else if mats.len() != out.layers || mats[0].cols() != out.width {
                return Err(Error::Alignment {
                    id,
                    message: format!(
                        "{} layers of width {}, expected {} of width {}",
                        mats.len(),
                        mats[0].cols(),
                        out.layers,
                        out.width
                    ),
                });
            }
            out.sentences.insert(id, mats);
        }
        Ok(out)
    }

    fn record_matrices(rec: ContextualRecord) -> std::result::Result<Vec<Tensor>, String> {
        if rec.layers.is_empty() {
            return Err("no layers".into());
        }
        let mut mats = Vec::new();
        for layer in &rec.layers {
            let width = layer.first().map_or(0, Vec::len);
            if width == 0 || layer.iter().any(|r| r.len() != width) {
                return Err("ragged or empty layer".into());
            }
            let rows: Vec<Vec<f64>> = match &rec.token_index {
                None => layer.clone(),
                Some(idx) => {
                    if idx.len() != layer.len() {
                        return Err("token_index length differs from subword rows".into());
                    }
                    let n = idx.iter().max().map_or(0, |m| m + 1);
                    let mut sums = vec![vec![0.0; width]; n];
                    let mut counts = vec![0usize; n];
                    for (row, &t) in layer.iter().zip(idx) {
                        counts[t] += 1;
                        for (s, x) in sums[t].iter_mut().zip(row) {
                            *s += x;
                        }
                    }
                    if counts.contains(&0) {
                        return Err("a token has no subwords".into());
                    }
                    sums.into_iter()
                        .zip(counts)
                        .map(|(s, c)| s.into_iter().map(|x| x / c as f64).collect())
                        .collect()
                }
            };
            let mut all = vec![vec![0.0; width]];
            all.extend(rows);
            mats.push(Tensor::from_rows(&all).map_err(|e| e.to_string())?);
        }
        if mats.iter().any(|m| m.rows() != mats[0].rows()) {
            return Err("layers disagree on row count".into());
        }
        Ok(mats)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut ids: Vec<_> = self.sentences.keys().collect();
        ids.sort();
        for id in ids {
            let rec = ContextualRecord {
                id: id.clone(),
                layers: self.sentences[id]
                    .iter()
                    .map(|m| m.to_rows().into_iter().skip(1).collect())
                    .collect(),
                token_index: None,
            };
            serde_json::to_writer(&mut out, &rec)?;
            writeln!(out)?;
        }
        Ok(())
    }

    /// Seeded vectors: each layer of a token mixes a hash of its surface with
    /// a hash of its left neighbour, so deeper layers carry some context.
    pub fn synthetic(sentences: &[Sentence], layers: usize, width: usize, seed: u64) -> Self {
        let mut out = ContextualEmbeddings {
            layers,
            width,
            sentences: HashMap::new(),
        };
        for s in sentences {
            let mats = (0..layers)
                .map(|j| {
                    let mut data = vec![0.0; width];
                    for (k, t) in s.tokens.iter().enumerate() {
                        let own = hashed_vector(&format!("{}|{j}", t.surface.to_lowercase()), seed, width);
                        let prev = if k == 0 { "<s>" } else { s.tokens[k - 1].surface.as_str() };
                        let ctx = hashed_vector(&format!("{}|{j}|prev", prev.to_lowercase()), seed, width);
                        let mix = j as f64 / layers.max(1) as f64;
                        data.extend(own.iter().zip(&ctx).map(|(a, b)| a + mix * b));
                    }
                    Tensor::from_vec(s.tokens.len() + 1, width, data).expect("sized")
                })
                .collect();
            out.sentences.insert(s.id.clone(), mats);
        }
        out
    }

    pub fn get(&self, id: &str) -> Option<&[Tensor]> {
        self.sentences.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub surface_dim: usize,
    pub lemma_dim: usize,
    pub pos_dim: usize,
    pub ne_dim: usize,
    pub static_proj: usize,
    pub ctx_proj: usize,
    pub layers: usize,
    pub hidden: usize,
    pub word_drop: f64,
    pub lemma_drop: f64,
    pub pos_drop: f64,
    pub dropout: f64,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            surface_dim: 100,
            lemma_dim: 100,
            pos_dim: 100,
            ne_dim: 100,
            static_proj: 125,
            ctx_proj: 512,
            layers: 3,
            hidden: 512,
            word_drop: 0.1,
            lemma_drop: 0.2,
            pos_drop: 0.1,
            dropout: 0.25,
            activation: Activation::Elu,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.surface_dim, self.lemma_dim, self.pos_dim, self.ne_dim, self.layers, self.hidden];
        if dims.contains(&0) {
            return Err(Error::config("encoder dimensions must be positive"));
        }
        for p in [self.word_drop, self.lemma_drop, self.pos_drop, self.dropout] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Index and vector inputs for one sentence, `<ROOT>` first.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceFeatures {
    pub surface: Vec<usize>,
    pub lemma: Vec<usize>,
    pub upos: Vec<usize>,
    pub xpos: Vec<usize>,
    pub ne: Vec<usize>,
    pub static_rows: Option<Tensor>,
    pub ctx_layers: Option<Vec<Tensor>>,
}

impl SentenceFeatures {
    pub fn len(&self) -> usize {
        self.surface.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surface.is_empty()
    }
}

pub fn prepare_features(
    id: &str,
    tokens: &[TokenRow],
    vocab: &Vocabulary,
    statics: Option<&StaticEmbeddings>,
    contextual: Option<&ContextualEmbeddings>,
) -> Result<SentenceFeatures> {
    let with_root = |f: &dyn Fn(&TokenRow) -> usize| {
        std::iter::once(ROOT).chain(tokens.iter().map(f)).collect::<Vec<_>>()
    };
    let ctx_layers = match contextual {
        None => None,
        Some(c) => {
            let mats = c.get(id).ok_or_else(|| Error::Alignment {
                id: id.to_string(),
                message: "no contextual embeddings for sentence".into(),
            })?;
            if mats[0].rows() != tokens.len() + 1 {
                return Err(Error::Alignment {
                    id: id.to_string(),
                    message: format!(
                        "{} contextual rows for {} tokens",
                        mats[0].rows() - 1,
                        tokens.len()
                    ),
                });
            }
            Some(mats.to_vec())
        }
    };
    Ok(SentenceFeatures {
        surface: with_root(&|t| vocab.surface.index(&t.surface.to_lowercase())),
        lemma: with_root(&|t| vocab.lemma.index(&t.lemma)),
        upos: with_root(&|t| vocab.upos.index(&t.upos)),
        xpos: with_root(&|t| vocab.xpos.index(&t.xpos)),
        ne: with_root(&|t| vocab.ne.index(&t.ne)),
        static_rows: statics.map(|s| s.rows(tokens)),
        ctx_layers,
    })
}

/// Columns of one feature group and its drop probability.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGroup {
    pub cols: Range<usize>,
    pub p: f64,
}

/// Mask that zeroes whole groups per row, each group drawn independently.
/// The first `keep_rows` rows are never dropped. Kept features are not
/// rescaled.
pub fn group_dropout_mask<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    groups: &[FeatureGroup],
    keep_rows: usize,
    rng: &mut R,
) -> Tensor {
    let mut mask = Tensor::full(rows, cols, 1.0);
    for r in keep_rows..rows {
        for g in groups {
            if g.p > 0.0 && rng.random::<f64>() < g.p {
                for c in g.cols.clone() {
                    mask.set(r, c, 0.0);
                }
            }
        }
    }
    mask
}

pub fn group_feature_dropout(
    tape: &mut Tape,
    x: Var,
    groups: &[FeatureGroup],
    keep_rows: usize,
    ctx: &mut Ctx,
) -> Result<Var> {
    if !ctx.train || groups.iter().all(|g| g.p <= 0.0) {
        return Ok(x);
    }
    let [r, c] = tape.shape(x);
    let mask = group_dropout_mask(r, c, groups, keep_rows, &mut ctx.rng);
    Ok(tape.mul_const(x, mask)?)
}

/// Encoder states: layer 0 is the feature matrix, layers `1..=N` the biLSTM
/// outputs. Row 0 is `<ROOT>`.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub layers: Vec<Var>,
    pub finals: Vec<[LstmState; 2]>,
}

impl EncoderOutput {
    pub fn top(&self) -> Var {
        *self.layers.last().expect("nonempty")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub surface: ParamId,
    pub lemma: ParamId,
    pub upos: ParamId,
    pub xpos: ParamId,
    pub ne: ParamId,
    pub static_proj: Option<Linear>,
    pub ctx_mixer: Option<ParamId>,
    pub ctx_proj: Option<Linear>,
    pub bilstm: BiLstm,
}

impl Encoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        config: &EncoderConfig,
        vocab: &Vocabulary,
        static_dim: Option<usize>,
        ctx_shape: Option<(usize, usize)>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let emb = |store: &mut ParamStore, n: &str, rows: usize, dim: usize, rng: &mut ChaCha8Rng| {
            store.add(format!("{name}.{n}"), Tensor::normal(rows, dim, 1.0 / (dim as f64).sqrt(), rng))
        };
        let surface = emb(store, "surface", vocab.surface.len(), config.surface_dim, rng);
        let lemma = emb(store, "lemma", vocab.lemma.len(), config.lemma_dim, rng);
        let upos = emb(store, "upos", vocab.upos.len(), config.pos_dim, rng);
        let xpos = emb(store, "xpos", vocab.xpos.len(), config.pos_dim, rng);
        let ne = emb(store, "ne", vocab.ne.len(), config.ne_dim, rng);
        let static_proj = static_dim
            .filter(|_| config.static_proj > 0)
            .map(|d| Linear::new(store, &format!("{name}.static_proj"), d, config.static_proj, true, rng));
        let (ctx_mixer, ctx_proj) = match ctx_shape.filter(|_| config.ctx_proj > 0) {
            Some((layers, width)) => (
                Some(store.add(format!("{name}.ctx_mix"), Tensor::zeros(1, layers))),
                Some(Linear::new(store, &format!("{name}.ctx_proj"), width, config.ctx_proj, true, rng)),
            ),
            None => (None, None),
        };
        let mut enc = Encoder {
            config: config.clone(),
            surface,
            lemma,
            upos,
            xpos,
            ne,
            static_proj,
            ctx_mixer,
            ctx_proj,
            bilstm: BiLstm {
                layers: Vec::new(),
                dropout: config.dropout,
            },
        };
        enc.bilstm = BiLstm::new(
            store,
            &format!("{name}.bilstm"),
            enc.feature_width(),
            config.hidden,
            config.layers,
            config.dropout,
            rng,
        );
        enc
    }

    /// Width of the concatenated token features.
    pub fn feature_width(&self) -> usize {
        let c = &self.config;
        c.surface_dim
            + c.lemma_dim
            + c.pos_dim
            + c.ne_dim
            + self.static_proj.as_ref().map_or(0, |l| l.output)
            + self.ctx_proj.as_ref().map_or(0, |l| l.output)
    }

    pub fn output_width(&self) -> usize {
        self.bilstm.output()
    }

    /// Mixed contextual vectors `Σ_j softmax(s)_j · H_j`; gradients reach `s`
    /// but not the stored vectors.
    pub fn mix_layers(&self, tape: &mut Tape, layers: &[Tensor]) -> Result<Option<Var>> {
        let Some(mixer) = self.ctx_mixer else { return Ok(None) };
        let s = tape.param(mixer);
        let w = tape.softmax(s);
        let mut acc: Option<Var> = None;
        for (j, h) in layers.iter().enumerate() {
            let hj = tape.constant(h.clone());
            let wj = tape.slice_cols(w, j, 1)?;
            let term = tape.mul(hj, wj)?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        Ok(acc)
    }

    /// Token features `h⁰`, one row per position with `<ROOT>` first.
    pub fn featurize(&self, tape: &mut Tape, f: &SentenceFeatures, ctx: &mut Ctx) -> Result<Var> {
        let act = self.config.activation;
        let surface = tape.embedding(self.surface, &f.surface)?;
        let lemma = tape.embedding(self.lemma, &f.lemma)?;
        let upos = tape.embedding(self.upos, &f.upos)?;
        let xpos = tape.embedding(self.xpos, &f.xpos)?;
        let pos = tape.add(upos, xpos)?;
        let ne = tape.embedding(self.ne, &f.ne)?;
        let mut parts = vec![surface, lemma, pos, ne];
        if let (Some(proj), Some(rows)) = (&self.static_proj, &f.static_rows) {
            let x = tape.constant(rows.clone());
            let y = proj.forward(tape, x)?;
            parts.push(act.apply(tape, y));
        }
        if let (Some(proj), Some(layers)) = (&self.ctx_proj, &f.ctx_layers) {
            if let Some(mixed) = self.mix_layers(tape, layers)? {
                let y = proj.forward(tape, mixed)?;
                parts.push(act.apply(tape, y));
            }
        }
        let h0 = tape.concat_cols(&parts)?;
        let groups = self.feature_groups();
        group_feature_dropout(tape, h0, &groups, 1, ctx)
    }

    /// Lemma, POS and "the rest". The rest (surface, NE and the projected
    /// vectors) sits on both sides of the lemma/POS block, so it appears as
    /// two ranges; they are drawn separately.
    pub fn feature_groups(&self) -> Vec<FeatureGroup> {
        let c = &self.config;
        let lemma = c.surface_dim..c.surface_dim + c.lemma_dim;
        let pos = lemma.end..lemma.end + c.pos_dim;
        let rest_tail = pos.end..self.feature_width();
        vec![
            FeatureGroup { cols: lemma, p: c.lemma_drop },
            FeatureGroup { cols: pos, p: c.pos_drop },
            FeatureGroup { cols: 0..c.surface_dim, p: c.word_drop },
            FeatureGroup { cols: rest_tail, p: c.word_drop },
        ]
    }

    pub fn encode(&self, tape: &mut Tape, h0: Var, ctx: &mut Ctx) -> Result<EncoderOutput> {
        let out = self.bilstm.forward(tape, h0, ctx)?;
        let mut layers = vec![h0];
        layers.extend(out.layers);
        Ok(EncoderOutput {
            layers,
            finals: out.finals,
        })
    }

    pub fn forward(&self, tape: &mut Tape, f: &SentenceFeatures, ctx: &mut Ctx) -> Result<EncoderOutput> {
        let h0 = self.featurize(tape, f, ctx)?;
        self.encode(tape, h0, ctx)
    }

    /// Width of a re-embedded decoder node: lemma, POS and static projection.
    pub fn node_width(&self) -> usize {
        self.config.lemma_dim + self.config.pos_dim + self.static_proj.as_ref().map_or(0, |l| l.output)
    }

    /// Embeds a generated node as if it were a token: its label through the
    /// lemma table, POS tags only when copied from a token (zeros otherwise)
    /// and the static vector of the label.
    pub fn embed_node(
        &self,
        tape: &mut Tape,
        lemma: usize,
        pos: Option<(usize, usize)>,
        static_row: Option<&[f64]>,
    ) -> Result<Var> {
        let l = tape.embedding(self.lemma, &[lemma])?;
        let p = match pos {
            Some((u, x)) => {
                let u = tape.embedding(self.upos, &[u])?;
                let x = tape.embedding(self.xpos, &[x])?;
                tape.add(u, x)?
            }
            None => tape.constant(Tensor::zeros(1, self.config.pos_dim)),
        };
        let mut parts = vec![l, p];
        if let Some(proj) = &self.static_proj {
            let row = match static_row {
                Some(r) => Tensor::row(r.to_vec()),
                None => Tensor::zeros(1, proj.input),
            };
            let x = tape.constant(row);
            let y = proj.forward(tape, x)?;
            parts.push(self.config.activation.apply(tape, y));
        }
        Ok(tape.concat_cols(&parts)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_detection() {
        for s in ["3.14", "42", "-1e3", " 7 "] {
            assert!(is_numeric(s), "{s}");
        }
        for s in ["", "three", "3.1.4", "1,000"] {
            assert!(!is_numeric(s), "{s}");
        }
    }

    #[test]
    fn symbols_threshold_and_reserved() {
        let words = ["a", "a", "a", "b", "b", "b", "b", "3.14"];
        let s = Symbols::build(words, 4, true);
        assert_eq!(s.index("a"), UNK);
        assert_eq!(s.index("b"), 3);
        assert_eq!(s.index("3.14"), NUM);
        assert_eq!(s.get(ROOT), ROOT_TOKEN);
        let json = serde_json::to_string(&s).unwrap();
        let back: Symbols = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
