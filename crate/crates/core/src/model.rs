//! The parser bundle: a shared encoder with optional heads per framework.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unimrp_tensor::{ParamGrads, ParamStore, Tape, Tensor, Var};

use crate::amr::{
    build_amr_graph, edge_inventory, node_vocabulary, preprocess, AmrConfig, AmrHead, AmrInput, AmrLossWeights,
    AmrLosses, AmrPrediction, AmrResources, AmrTree, EntityLexicon, NodeEmbedder, SenseTable,
};
use crate::biaffine::{decode_flavor0, edge_loss, label_loss, BiaffineConfig, BiaffineHead, EdgeScores, GoldArcs};
use crate::eds::{
    anchor_abstract_nodes, anchor_labels, anchor_loss, generate_abstract_nodes, gold_anchor_samples, AbstractModels,
    AnchorNet, AnchorSample, ConversionRuleSet, EdsResources, LogRegTraining,
};
use crate::encoder::{
    prepare_features, ContextualEmbeddings, Encoder, EncoderConfig, EncoderOutput, SentenceFeatures, StaticEmbeddings,
    Vocabulary,
};
use crate::error::{Error, Result};
use crate::graph::{Framework, MrpGraph, Sentence};
use crate::nn::{Activation, Ctx};
use crate::sdp::{build_graph, gold_arcs, gold_frames, FrameHead, FramePrediction, GoldFrame, SdpLossWeights, SdpParts, SdpResources};
use crate::ucca::{decode_ucca, label_inventory, serialize_ucca, SerializedUcca, UccaConfig, UccaHead, UccaLossWeights, UccaLosses, UccaPrediction};

pub const ENCODER: &str = "encoder";
pub const EDS_ENCODER: &str = "eds_encoder";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub logreg_dim: usize,
    pub logreg: LogRegTraining,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig {
            embed_dim: 50,
            hidden: 100,
            mlp_hidden: 200,
            logreg_dim: 1 << 12,
            logreg: LogRegTraining::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub min_freq: usize,
    pub sdp: BiaffineConfig,
    /// PSD reuses the DM edge and label MLPs, keeping its own bilinear
    /// parameters.
    pub share_sdp_mlps: bool,
    pub frame_hidden: usize,
    pub frame_dropout: f64,
    pub ucca: UccaConfig,
    pub amr: AmrConfig,
    pub anchor: AnchorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            min_freq: crate::encoder::MIN_FREQ,
            sdp: BiaffineConfig {
                edge_hidden: 600,
                label_hidden: 600,
                ..BiaffineConfig::default()
            },
            share_sdp_mlps: false,
            frame_hidden: 600,
            frame_dropout: 0.55,
            ucca: UccaConfig::default(),
            amr: AmrConfig::default(),
            anchor: AnchorConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Desk-scale sizes with every dropout off; for smoke tests and toy data.
    pub fn small() -> Self {
        let biaffine = BiaffineConfig {
            edge_hidden: 48,
            edge_dim: 48,
            label_hidden: 48,
            label_dim: 48,
            input_dropout: 0.0,
            edge_dropout: 0.0,
            label_dropout: 0.0,
            activation: Activation::Elu,
        };
        ModelConfig {
            encoder: EncoderConfig {
                surface_dim: 16,
                lemma_dim: 16,
                pos_dim: 8,
                ne_dim: 8,
                static_proj: 16,
                ctx_proj: 16,
                layers: 2,
                hidden: 32,
                word_drop: 0.0,
                lemma_drop: 0.0,
                pos_drop: 0.0,
                dropout: 0.0,
                activation: Activation::Elu,
            },
            min_freq: 1,
            sdp: biaffine.clone(),
            share_sdp_mlps: false,
            frame_hidden: 32,
            frame_dropout: 0.0,
            ucca: UccaConfig {
                biaffine: biaffine.clone(),
                attention_dim: 32,
                pointer_seed_dim: 16,
                pointer_hidden: 32,
                position_dim: 8,
                reencoder_hidden: 32,
                reencoder_layers: 1,
                decoder_dropout: 0.0,
                top_k: None,
                weights: Default::default(),
            },
            amr: AmrConfig {
                biaffine,
                decoder_hidden: 64,
                attention_dim: 32,
                decoder_dropout: 0.0,
                beam_width: 3,
                min_label_freq: 1,
                weights: Default::default(),
            },
            anchor: AnchorConfig {
                embed_dim: 8,
                hidden: 16,
                mlp_hidden: 16,
                logreg_dim: 256,
                logreg: LogRegTraining::default(),
            },
        }
    }
}

/// Word vectors supplied alongside the corpus.
#[derive(Clone, Debug, Default)]
pub struct Embeddings {
    pub statics: Option<StaticEmbeddings>,
    pub contextual: Option<ContextualEmbeddings>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmHead {
    pub edges: BiaffineHead,
    pub frames: FrameHead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdsHead {
    pub encoder: Encoder,
    pub anchor: AnchorNet,
}

/// Training targets of one sentence, computed once.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub features: SentenceFeatures,
    pub dm: Option<(GoldArcs, Vec<GoldFrame>)>,
    pub psd: Option<GoldArcs>,
    pub ucca: Option<SerializedUcca>,
    pub amr: Option<AmrTree>,
    pub eds: Option<Vec<(AnchorSample, (usize, usize))>>,
}

impl Prepared {
    pub fn has(&self, fw: Framework) -> bool {
        match fw {
            Framework::Dm => self.dm.is_some(),
            Framework::Psd => self.psd.is_some(),
            Framework::Ucca => self.ucca.is_some(),
            Framework::Amr => self.amr.is_some(),
            Framework::Eds => self.eds.is_some(),
        }
    }
}

/// Component losses of one sentence; `None` for frameworks without a gold
/// graph or outside the requested set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Losses<T> {
    pub dm: Option<SdpParts<T>>,
    pub psd: Option<SdpParts<T>>,
    pub ucca: Option<UccaLosses<T>>,
    pub amr: Option<AmrLosses<T>>,
    pub eds: Option<T>,
}

impl<T> Default for Losses<T> {
    fn default() -> Self {
        Losses {
            dm: None,
            psd: None,
            ucca: None,
            amr: None,
            eds: None,
        }
    }
}

impl<T: Copy> Losses<T> {
    pub fn map<U>(&self, f: impl Fn(T) -> U) -> Losses<U> {
        let sdp = |p: &SdpParts<T>| SdpParts {
            edge: f(p.edge),
            label: f(p.label),
            frame: p.frame.map(&f),
        };
        Losses {
            dm: self.dm.as_ref().map(sdp),
            psd: self.psd.as_ref().map(sdp),
            ucca: self.ucca.map(|u| UccaLosses {
                edge: f(u.edge),
                label: f(u.label),
                remote: f(u.remote),
                dec: f(u.dec),
            }),
            amr: self.amr.map(|a| AmrLosses {
                edge: f(a.edge),
                label: f(a.label),
                dec: f(a.dec),
                cov: f(a.cov),
            }),
            eds: self.eds.map(&f),
        }
    }
}

/// Coefficients of the joint objective over DM, PSD, UCCA and AMR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultitaskWeights {
    pub biaf: f64,
    pub label: f64,
    pub frame: f64,
    pub remote_ucca: f64,
    pub dec_ucca: f64,
    pub dec_amr: f64,
    pub cov_amr: f64,
}

impl Default for MultitaskWeights {
    fn default() -> Self {
        MultitaskWeights {
            biaf: 1.0,
            label: 0.15,
            frame: 0.5,
            remote_ucca: 0.5,
            dec_ucca: 0.08,
            dec_amr: 1.2,
            cov_amr: 1.0,
        }
    }
}

impl MultitaskWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.label) {
            return Err(Error::config(format!("multitask λ_label = {} outside [0, 1]", self.label)));
        }
        for (n, v) in [
            ("biaf", self.biaf),
            ("frame", self.frame),
            ("remote_ucca", self.remote_ucca),
            ("dec_ucca", self.dec_ucca),
            ("dec_amr", self.dec_amr),
            ("cov_amr", self.cov_amr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("multitask λ_{n} = {v} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// What a training run minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Objective {
    /// DM and PSD jointly.
    Sdp(SdpLossWeights),
    Ucca(UccaLossWeights),
    Amr(AmrLossWeights),
    /// EDS anchor prediction.
    Eds,
    Multitask(MultitaskWeights),
}

impl Objective {
    pub fn frameworks(&self) -> Vec<Framework> {
        match self {
            Objective::Sdp(_) => vec![Framework::Dm, Framework::Psd],
            Objective::Ucca(_) => vec![Framework::Ucca],
            Objective::Amr(_) => vec![Framework::Amr],
            Objective::Eds => vec![Framework::Eds],
            Objective::Multitask(_) => vec![Framework::Dm, Framework::Psd, Framework::Ucca, Framework::Amr],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Objective::Sdp(w) => w.validate(),
            Objective::Ucca(w) => w.validate(),
            Objective::Amr(w) => w.validate(),
            Objective::Eds => Ok(()),
            Objective::Multitask(w) => w.validate(),
        }
    }

    /// Weighted terms restricted to one framework, or all of them.
    pub fn terms<T: Copy>(&self, l: &Losses<T>, only: Option<Framework>) -> Vec<(f64, T)> {
        let want = |fw: Framework| only.is_none_or(|o| o == fw);
        let mut out = Vec::new();
        match self {
            Objective::Sdp(w) => {
                let [ce, cl, cf] = w.coefficients();
                for (fw, p) in [(Framework::Dm, &l.dm), (Framework::Psd, &l.psd)] {
                    if let (true, Some(p)) = (want(fw), p) {
                        out.extend([(ce, p.edge), (cl, p.label)]);
                        if let Some(f) = p.frame {
                            out.push((cf, f));
                        }
                    }
                }
            }
            Objective::Ucca(w) => {
                if let (true, Some(u)) = (want(Framework::Ucca), &l.ucca) {
                    out.extend([(w.edge, u.edge), (w.label, u.label), (w.remote, u.remote), (w.dec, u.dec)]);
                }
            }
            Objective::Amr(w) => {
                if let (true, Some(a)) = (want(Framework::Amr), &l.amr) {
                    let [e, lb, d, c] = w.coefficients();
                    out.extend([(e, a.edge), (lb, a.label), (d, a.dec), (c, a.cov)]);
                }
            }
            Objective::Eds => {
                if let (true, Some(e)) = (want(Framework::Eds), l.eds) {
                    out.push((1.0, e));
                }
            }
            Objective::Multitask(w) => {
                let cl = w.biaf * w.label;
                let ce = w.biaf * (1.0 - w.label);
                for (fw, p) in [(Framework::Dm, &l.dm), (Framework::Psd, &l.psd)] {
                    if let (true, Some(p)) = (want(fw), p) {
                        out.extend([(ce, p.edge), (cl, p.label)]);
                        if let Some(f) = p.frame {
                            out.push((cl * w.frame, f));
                        }
                    }
                }
                if let (true, Some(u)) = (want(Framework::Ucca), &l.ucca) {
                    out.extend([(ce, u.edge), (cl, u.label), (w.dec_ucca, u.dec), (w.remote_ucca, u.remote)]);
                }
                if let (true, Some(a)) = (want(Framework::Amr), &l.amr) {
                    out.extend([(ce, a.edge), (cl, a.label), (w.dec_amr, a.dec), (w.cov_amr, a.cov)]);
                }
            }
        }
        out
    }

    pub fn value(&self, l: &Losses<f64>, only: Option<Framework>) -> f64 {
        self.terms(l, only).iter().map(|(c, v)| c * v).sum()
    }

    /// `None` when nothing in the sentence contributes.
    pub fn on_tape(&self, tape: &mut Tape, l: &Losses<Var>) -> Result<Option<Var>> {
        let terms = self.terms(l, None);
        if terms.is_empty() {
            return Ok(None);
        }
        Ok(Some(tape.lin_comb(&terms)?))
    }
}

/// Per-framework outputs before graph assembly; what ensembles combine.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SentenceScores {
    pub dm: Option<(EdgeScores, FramePrediction)>,
    pub psd: Option<EdgeScores>,
    pub ucca: Option<UccaPrediction>,
    pub amr: Option<AmrPrediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parser {
    pub config: ModelConfig,
    pub frameworks: Vec<Framework>,
    pub vocab: Vocabulary,
    pub static_dim: Option<usize>,
    pub ctx_shape: Option<(usize, usize)>,
    pub encoder: Encoder,
    pub dm: Option<DmHead>,
    pub psd: Option<BiaffineHead>,
    pub ucca: Option<UccaHead>,
    pub amr: Option<AmrHead>,
    pub eds: Option<EdsHead>,
    pub sdp_res: SdpResources,
    pub eds_res: EdsResources,
    pub amr_res: AmrResources,
}

fn edge_labels<'a>(graphs: impl IntoIterator<Item = &'a MrpGraph>) -> Vec<String> {
    let set: BTreeSet<String> = graphs
        .into_iter()
        .flat_map(|g| g.edges.iter().filter_map(|e| e.label.clone()))
        .collect();
    set.into_iter().collect()
}

impl Parser {
    /// Builds vocabularies, resources and freshly initialized heads for
    /// `frameworks` from the training sentences.
    pub fn build(
        config: &ModelConfig,
        frameworks: &[Framework],
        train: &[Sentence],
        emb: &Embeddings,
        seed: u64,
    ) -> Result<(Parser, ParamStore)> {
        config.encoder.validate()?;
        config.amr.weights.validate()?;
        config.ucca.weights.validate()?;
        let fws: BTreeSet<Framework> = frameworks.iter().copied().collect();
        if fws.contains(&Framework::Eds) && !fws.contains(&Framework::Dm) {
            return Err(Error::config("EDS parsing needs a DM head in the same model"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let with = |fw: Framework| train.iter().filter_map(move |s| s.graph(fw).map(|g| (s, g)));

        let mut amr_trees = Vec::new();
        let mut amr_res = AmrResources::default();
        if fws.contains(&Framework::Amr) {
            let mut senses = SenseTable::default();
            let mut entities = EntityLexicon::default();
            for (s, g) in with(Framework::Amr) {
                for n in &g.nodes {
                    if let Some(l) = &n.label {
                        senses.observe(l);
                    }
                }
                match preprocess(g, &s.tokens) {
                    Ok(p) => {
                        entities.observe(&p.record, &s.tokens);
                        amr_trees.push(p.tree);
                    }
                    Err(e) => log::warn!("{}: AMR graph skipped: {e}", s.id),
                }
            }
            amr_res = AmrResources { senses, entities };
        }
        let extra: Vec<String> = amr_trees
            .iter()
            .flat_map(|t| t.nodes.iter().map(|n| n.label.clone()))
            .collect();
        let vocab = Vocabulary::from_sentences(train, &extra, config.min_freq)?;
        let static_dim = emb.statics.as_ref().map(|s| s.dim);
        let ctx_shape = emb.contextual.as_ref().map(|c| (c.layers, c.width));
        let encoder = Encoder::new(&mut store, ENCODER, &config.encoder, &vocab, static_dim, ctx_shape, &mut rng);
        let width = encoder.output_width();

        let mut sdp_res = SdpResources::default();
        if fws.contains(&Framework::Dm) || fws.contains(&Framework::Psd) {
            sdp_res = SdpResources::from_training(with(Framework::Dm).chain(with(Framework::Psd)));
        }
        let dm = fws.contains(&Framework::Dm).then(|| {
            let labels = edge_labels(with(Framework::Dm).map(|p| p.1));
            DmHead {
                edges: BiaffineHead::new(&mut store, "dm", width, &config.sdp, labels, &mut rng),
                frames: FrameHead::new(
                    &mut store,
                    "dm_frame",
                    width,
                    config.frame_hidden,
                    &sdp_res.frames,
                    config.sdp.activation,
                    config.frame_dropout,
                    config.sdp.input_dropout,
                    &mut rng,
                ),
            }
        });
        let psd = fws.contains(&Framework::Psd).then(|| {
            let labels = edge_labels(with(Framework::Psd).map(|p| p.1));
            match (&dm, config.share_sdp_mlps) {
                (Some(dm), true) => BiaffineHead::sharing_mlps(&mut store, "psd", &config.sdp, labels, &dm.edges),
                _ => BiaffineHead::new(&mut store, "psd", width, &config.sdp, labels, &mut rng),
            }
        });
        let ucca = if fws.contains(&Framework::Ucca) {
            let serialized: Vec<SerializedUcca> = with(Framework::Ucca)
                .filter_map(|(s, g)| serialize_ucca(g, &s.tokens).ok())
                .collect();
            let labels = label_inventory(&serialized);
            Some(UccaHead::new(
                &mut store,
                "ucca",
                &config.ucca,
                config.encoder.layers,
                config.encoder.hidden,
                &labels,
                &mut rng,
            ))
        } else {
            None
        };
        let amr = fws.contains(&Framework::Amr).then(|| {
            AmrHead::new(
                &mut store,
                "amr",
                &config.amr,
                config.encoder.hidden,
                encoder.node_width(),
                node_vocabulary(&amr_trees, config.amr.min_label_freq).split_off(2),
                edge_inventory(&amr_trees),
                &mut rng,
            )
        });
        let mut eds_res = EdsResources::default();
        let eds = if fws.contains(&Framework::Eds) {
            let pairs: Vec<(&Sentence, &MrpGraph, &MrpGraph)> = train
                .iter()
                .filter_map(|s| Some((s, s.graph(Framework::Dm)?, s.graph(Framework::Eds)?)))
                .collect();
            let rules = ConversionRuleSet::default();
            let models = AbstractModels::train(
                pairs.iter().map(|(_, d, e)| (*d, *e)),
                &rules,
                config.anchor.logreg_dim,
                config.anchor.logreg,
            )?;
            eds_res = EdsResources {
                rules,
                models: Some(models),
            };
            let samples: Vec<AnchorSample> = pairs.iter().flat_map(|(s, d, e)| gold_anchor_samples(d, e, s)).collect();
            let enc = Encoder::new(&mut store, EDS_ENCODER, &config.encoder, &vocab, static_dim, ctx_shape, &mut rng);
            let a = &config.anchor;
            let anchor = AnchorNet::new(
                &mut store,
                "eds_anchor",
                anchor_labels(&samples),
                a.embed_dim,
                a.hidden,
                enc.output_width(),
                a.mlp_hidden,
                &mut rng,
            );
            Some(EdsHead { encoder: enc, anchor })
        } else {
            None
        };
        let parser = Parser {
            config: config.clone(),
            frameworks: fws.into_iter().collect(),
            vocab,
            static_dim,
            ctx_shape,
            encoder,
            dm,
            psd,
            ucca,
            amr,
            eds,
            sdp_res,
            eds_res,
            amr_res,
        };
        Ok((parser, store))
    }

    pub fn has(&self, fw: Framework) -> bool {
        self.frameworks.contains(&fw)
    }

    pub fn features(&self, s: &Sentence, emb: &Embeddings) -> Result<SentenceFeatures> {
        if self.static_dim.is_some() && emb.statics.is_none() {
            return Err(Error::config("model expects static word embeddings"));
        }
        if self.ctx_shape.is_some() && emb.contextual.is_none() {
            return Err(Error::config("model expects contextual embeddings"));
        }
        let statics = emb.statics.as_ref().filter(|_| self.static_dim.is_some());
        let contextual = emb.contextual.as_ref().filter(|_| self.ctx_shape.is_some());
        prepare_features(&s.id, &s.tokens, &self.vocab, statics, contextual)
    }

    /// Features and gold targets for every framework this model has.
    pub fn prepare(&self, s: &Sentence, emb: &Embeddings) -> Result<Prepared> {
        let features = self.features(s, emb)?;
        let dm = match (&self.dm, s.graph(Framework::Dm)) {
            (Some(h), Some(g)) => Some((gold_arcs(g, s, &h.edges.labels), gold_frames(g, s, &self.sdp_res.frames))),
            _ => None,
        };
        let psd = match (&self.psd, s.graph(Framework::Psd)) {
            (Some(h), Some(g)) => Some(gold_arcs(g, s, &h.labels)),
            _ => None,
        };
        let ucca = match (&self.ucca, s.graph(Framework::Ucca)) {
            (Some(_), Some(g)) => match serialize_ucca(g, &s.tokens) {
                Ok(x) => Some(x),
                Err(e) => {
                    log::warn!("{}: UCCA graph skipped: {e}", s.id);
                    None
                }
            },
            _ => None,
        };
        let amr = match (&self.amr, s.graph(Framework::Amr)) {
            (Some(_), Some(g)) => match preprocess(g, &s.tokens) {
                Ok(p) => Some(p.tree),
                Err(e) => {
                    log::warn!("{}: AMR graph skipped: {e}", s.id);
                    None
                }
            },
            _ => None,
        };
        let eds = match (&self.eds, s.graph(Framework::Dm), s.graph(Framework::Eds)) {
            (Some(_), Some(d), Some(e)) => Some(
                gold_anchor_samples(d, e, s)
                    .into_iter()
                    .filter_map(|x| x.span.map(|sp| (x, sp)))
                    .collect(),
            ),
            _ => None,
        };
        Ok(Prepared {
            features,
            dm,
            psd,
            ucca,
            amr,
            eds,
        })
    }

    fn amr_input<'a>(&'a self, enc: &'a EncoderOutput, p: &'a Prepared, s: &'a Sentence, emb: &'a Embeddings) -> AmrInput<'a> {
        AmrInput {
            enc,
            features: &p.features,
            tokens: &s.tokens,
            embedder: NodeEmbedder {
                encoder: &self.encoder,
                vocab: &self.vocab,
                statics: emb.statics.as_ref().filter(|_| self.static_dim.is_some()),
            },
        }
    }

    /// Component losses for the frameworks in `only` that have gold targets.
    pub fn losses(
        &self,
        tape: &mut Tape,
        s: &Sentence,
        p: &Prepared,
        emb: &Embeddings,
        only: &[Framework],
        ctx: &mut Ctx,
    ) -> Result<Losses<Var>> {
        let want = |fw: Framework| only.contains(&fw) && p.has(fw);
        let mut out = Losses::default();
        if s.tokens.is_empty() {
            return Ok(out);
        }
        let shared = [Framework::Dm, Framework::Psd, Framework::Ucca, Framework::Amr];
        if shared.iter().any(|&fw| want(fw)) {
            let enc = self.encoder.forward(tape, &p.features, ctx)?;
            let states = enc.top();
            if let (true, Some(h), Some((arcs, frames))) = (want(Framework::Dm), &self.dm, &p.dm) {
                let pr = h.edges.project(tape, states, ctx)?;
                let logits = h.edges.edge_logits(tape, &pr)?;
                out.dm = Some(SdpParts {
                    edge: edge_loss(tape, logits, arcs)?,
                    label: label_loss(tape, &h.edges, &pr, arcs)?,
                    frame: Some(h.frames.loss(tape, states, frames, ctx)?),
                });
            }
            if let (true, Some(h), Some(arcs)) = (want(Framework::Psd), &self.psd, &p.psd) {
                let pr = h.project(tape, states, ctx)?;
                let logits = h.edge_logits(tape, &pr)?;
                out.psd = Some(SdpParts {
                    edge: edge_loss(tape, logits, arcs)?,
                    label: label_loss(tape, h, &pr, arcs)?,
                    frame: None,
                });
            }
            if let (true, Some(h), Some(gold)) = (want(Framework::Ucca), &self.ucca, &p.ucca) {
                out.ucca = Some(h.losses(tape, &enc, gold, ctx)?);
            }
            if let (true, Some(h), Some(tree)) = (want(Framework::Amr), &self.amr, &p.amr) {
                let inp = self.amr_input(&enc, p, s, emb);
                out.amr = Some(h.losses(tape, &inp, tree, ctx)?);
            }
        }
        if let (true, Some(h), Some(samples)) = (want(Framework::Eds), &self.eds, &p.eds) {
            let enc = h.encoder.forward(tape, &p.features, ctx)?;
            let n = s.tokens.len();
            let states = tape.slice_rows(enc.top(), 1, n)?;
            let mut logits = Vec::with_capacity(samples.len());
            for (sample, _) in samples {
                logits.push(h.anchor.logits(tape, states, sample, ctx)?);
            }
            let gold: Vec<(usize, usize)> = samples.iter().map(|x| x.1).collect();
            out.eds = Some(anchor_loss(tape, &logits, &gold)?);
        }
        Ok(out)
    }

    /// Objective value and parameter gradients for one sentence.
    pub fn sentence_gradients(
        &self,
        store: &ParamStore,
        s: &Sentence,
        p: &Prepared,
        emb: &Embeddings,
        objective: &Objective,
        ctx: &mut Ctx,
    ) -> Result<Option<(f64, Losses<f64>, ParamGrads)>> {
        let mut tape = Tape::new(store);
        let l = self.losses(&mut tape, s, p, emb, &objective.frameworks(), ctx)?;
        let Some(loss) = objective.on_tape(&mut tape, &l)? else { return Ok(None) };
        let value = tape.scalar_value(loss);
        let values = l.map(|v| tape.scalar_value(v));
        let grads = tape.backward(loss).into_params();
        Ok(Some((value, values, grads)))
    }

    /// Evaluation-mode component losses, detached.
    pub fn eval_losses(&self, store: &ParamStore, s: &Sentence, p: &Prepared, emb: &Embeddings, only: &[Framework]) -> Result<Losses<f64>> {
        let mut tape = Tape::new(store);
        let l = self.losses(&mut tape, s, p, emb, only, &mut Ctx::eval())?;
        Ok(l.map(|v| tape.scalar_value(v)))
    }

    /// Edge, label, frame, pointer and node predictions for one framework.
    pub fn scores(&self, store: &ParamStore, s: &Sentence, features: &SentenceFeatures, emb: &Embeddings, fw: Framework) -> Result<SentenceScores> {
        let mut out = SentenceScores::default();
        if s.tokens.is_empty() {
            return Ok(out);
        }
        let mut tape = Tape::new(store);
        let mut ctx = Ctx::eval();
        let enc = self.encoder.forward(&mut tape, features, &mut ctx)?;
        let states = enc.top();
        match fw {
            Framework::Dm => {
                let h = self.dm.as_ref().ok_or_else(|| Error::model("model has no DM head"))?;
                let sc = h.edges.score(&mut tape, states, &mut ctx)?;
                let fr = h.frames.predict(&mut tape, states, &mut ctx)?;
                out.dm = Some((sc, fr));
            }
            Framework::Psd => {
                let h = self.psd.as_ref().ok_or_else(|| Error::model("model has no PSD head"))?;
                out.psd = Some(h.score(&mut tape, states, &mut ctx)?);
            }
            Framework::Ucca => {
                let h = self.ucca.as_ref().ok_or_else(|| Error::model("model has no UCCA head"))?;
                out.ucca = Some(h.predict(&mut tape, &enc)?);
            }
            Framework::Amr => {
                let h = self.amr.as_ref().ok_or_else(|| Error::model("model has no AMR head"))?;
                let prepared = Prepared {
                    features: features.clone(),
                    dm: None,
                    psd: None,
                    ucca: None,
                    amr: None,
                    eds: None,
                };
                let inp = self.amr_input(&enc, &prepared, s, emb);
                out.amr = Some(h.predict(&mut tape, &inp, self.config.amr.beam_width)?);
            }
            Framework::Eds => return Err(Error::model("EDS is predicted from a DM graph")),
        }
        Ok(out)
    }

    /// Output graph for one framework from its scores.
    pub fn assemble(&self, s: &Sentence, scores: &SentenceScores, fw: Framework) -> Result<MrpGraph> {
        let empty = || MrpGraph::new(s.id.clone(), fw, s.input.clone());
        Ok(match fw {
            Framework::Dm => match (&scores.dm, &self.dm) {
                (Some((sc, fr)), Some(h)) => build_graph(s, fw, &decode_flavor0(sc), &h.edges.labels, Some(fr), &self.sdp_res),
                _ => empty(),
            },
            Framework::Psd => match (&scores.psd, &self.psd) {
                (Some(sc), Some(h)) => build_graph(s, fw, &decode_flavor0(sc), &h.labels, None, &self.sdp_res),
                _ => empty(),
            },
            Framework::Ucca => match (&scores.ucca, &self.ucca) {
                (Some(pr), Some(h)) => decode_ucca(&s.id, &s.input, &s.tokens, h.labels(), pr),
                _ => empty(),
            },
            Framework::Amr => match &scores.amr {
                Some(pr) => build_amr_graph(&s.id, &s.input, &s.tokens, pr, &self.amr_res),
                None => empty(),
            },
            Framework::Eds => return Err(Error::model("EDS is predicted from a DM graph")),
        })
    }

    /// EDS graph from a (predicted or ensembled) DM graph.
    pub fn predict_eds(&self, store: &ParamStore, s: &Sentence, features: &SentenceFeatures, dm: &MrpGraph) -> Result<MrpGraph> {
        let h = self.eds.as_ref().ok_or_else(|| Error::model("model has no EDS head"))?;
        let mut partial = generate_abstract_nodes(dm, &self.eds_res.rules, self.eds_res.models.as_ref());
        if s.tokens.is_empty() {
            return Ok(partial.graph);
        }
        let mut tape = Tape::new(store);
        let enc = h.encoder.forward(&mut tape, features, &mut Ctx::eval())?;
        let states = tape.slice_rows(enc.top(), 1, s.tokens.len())?;
        let states = tape.value(states).clone();
        let swaps = anchor_abstract_nodes(&mut partial, s, &h.anchor, store, &states)?;
        if swaps > 0 {
            log::debug!("{}: {swaps} anchor spans swapped", s.id);
        }
        Ok(partial.graph)
    }

    /// Graphs for every requested framework, each from its own parameters.
    pub fn predict(&self, stores: &BTreeMap<Framework, ParamStore>, s: &Sentence, emb: &Embeddings, fws: &[Framework]) -> Result<Vec<MrpGraph>> {
        let features = self.features(s, emb)?;
        let store_for = |fw: Framework| {
            stores
                .get(&fw)
                .ok_or_else(|| Error::model(format!("no parameters for {}", fw.as_str())))
        };
        let mut out = Vec::new();
        let mut dm_graph = None;
        for &fw in fws {
            if fw == Framework::Eds {
                continue;
            }
            let sc = self.scores(store_for(fw)?, s, &features, emb, fw)?;
            let g = self.assemble(s, &sc, fw)?;
            if fw == Framework::Dm {
                dm_graph = Some(g.clone());
            }
            out.push(g);
        }
        if fws.contains(&Framework::Eds) {
            let dm = match dm_graph {
                Some(g) => g,
                None => {
                    let sc = self.scores(store_for(Framework::Dm)?, s, &features, emb, Framework::Dm)?;
                    self.assemble(s, &sc, Framework::Dm)?
                }
            };
            out.push(self.predict_eds(store_for(Framework::Eds)?, s, &features, &dm)?);
        }
        Ok(out)
    }

    /// Copies the shared encoder's values into the EDS anchor encoder.
    pub fn transfer_eds_encoder(&self, store: &mut ParamStore) -> usize {
        let mut copied = 0;
        let names: Vec<(String, unimrp_tensor::ParamId)> = store
            .ids()
            .map(|id| (store.name(id).to_string(), id))
            .filter(|(n, _)| n.starts_with(&format!("{EDS_ENCODER}.")))
            .collect();
        for (name, id) in names {
            let src_name = format!("{ENCODER}.{}", &name[EDS_ENCODER.len() + 1..]);
            if let Some(src) = store.id(&src_name) {
                if store.get(src).shape() == store.get(id).shape() {
                    let v: Tensor = store.get(src).clone();
                    *store.get_mut(id) = v;
                    copied += 1;
                }
            }
        }
        copied
    }

    pub fn save_meta(&self, path: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load_meta(path: &Path) -> Result<Parser> {
        let f = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }

    /// A store with this model's layout, values from a checkpoint file.
    pub fn load_params(&self, path: &Path) -> Result<ParamStore> {
        let (_, mut store) = self.skeleton()?;
        store.load_checkpoint(BufReader::new(File::open(path)?))?;
        Ok(store)
    }

    /// Re-registers every parameter with its initial shape so a checkpoint
    /// can be loaded into it.
    fn skeleton(&self) -> Result<(Parser, ParamStore)> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, ENCODER, &self.config.encoder, &self.vocab, self.static_dim, self.ctx_shape, &mut rng);
        let width = enc.output_width();
        if let Some(h) = &self.dm {
            BiaffineHead::new(&mut store, "dm", width, &self.config.sdp, h.edges.labels.clone(), &mut rng);
            FrameHead::new(
                &mut store,
                "dm_frame",
                width,
                self.config.frame_hidden,
                &self.sdp_res.frames,
                self.config.sdp.activation,
                self.config.frame_dropout,
                self.config.sdp.input_dropout,
                &mut rng,
            );
        }
        if let Some(h) = &self.psd {
            BiaffineHead::new(&mut store, "psd", width, &self.config.sdp, h.labels.clone(), &mut rng);
        }
        if let Some(h) = &self.ucca {
            UccaHead::new(&mut store, "ucca", &self.config.ucca, self.config.encoder.layers, self.config.encoder.hidden, h.labels(), &mut rng);
        }
        if let Some(h) = &self.amr {
            AmrHead::new(
                &mut store,
                "amr",
                &self.config.amr,
                self.config.encoder.hidden,
                enc.node_width(),
                h.labels.iter().skip(2).cloned().collect(),
                h.edges.labels.clone(),
                &mut rng,
            );
        }
        if let Some(h) = &self.eds {
            let e = Encoder::new(&mut store, EDS_ENCODER, &self.config.encoder, &self.vocab, self.static_dim, self.ctx_shape, &mut rng);
            let a = &self.config.anchor;
            AnchorNet::new(
                &mut store,
                "eds_anchor",
                h.anchor.labels.iter().skip(1).cloned().collect(),
                a.embed_dim,
                a.hidden,
                e.output_width(),
                a.mlp_hidden,
                &mut rng,
            );
        }
        Ok((self.clone(), store))
    }
}

/// Activation used by default heads.
pub fn default_activation() -> Activation {
    BiaffineConfig::default().activation
}
